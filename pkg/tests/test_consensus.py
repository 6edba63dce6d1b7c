import numpy as np
import pytest
from scipy import stats

from LimeJDS.config import IntegratorConfig
from LimeJDS.consensus import (
    CONSENSUS_COLUMNS,
    _random_errors,
    ConsensusProtocol,
    LeaderFollowerGraph,
    NoiseModel,
    check_dissipativity,
    consentability_verdict,
    laplacian_from_adjacency,
    linear_error_exponent,
    linear_log_drift,
    permute_followers,
    read_adjacency_list,
    selector_matrices,
    simulate_error_system,
    simulate_network,
)
from LimeJDS.exceptions import DimensionMismatchError, GraphError, NoSpanningTreeError, ValidationError
from LimeJDS.rng import make_streams
from LimeJDS.systems import LevyMeasure


def random_spanning_graph(rng, followers):
    """Every follower attaches to an earlier node, plus a few extra follower edges."""
    adjacency = np.zeros((followers + 1, followers + 1), dtype=int)
    for k in rng.permutation(np.arange(1, followers + 1)):
        attached = [0] + [j for j in range(1, followers + 1) if adjacency[j].any() or adjacency[:, j].any()]
        j = int(rng.choice(attached))
        if j == 0:
            adjacency[k, 0] = 1
        else:
            adjacency[k, j] = adjacency[j, k] = 1
    for _ in range(followers):
        i, j = rng.integers(1, followers + 1, size=2)
        if i != j:
            adjacency[i, j] = adjacency[j, i] = 1
    return LeaderFollowerGraph(adjacency)


def star(followers):
    adjacency = np.zeros((followers + 1, followers + 1), dtype=int)
    adjacency[1:, 0] = 1
    return LeaderFollowerGraph(adjacency)


def test_selectors_rebuild_the_laplacian():
    rng = np.random.default_rng(0)
    for _ in range(50):
        graph = random_spanning_graph(rng, int(rng.integers(1, 7)))
        S, S_bar = selector_matrices(graph)
        rebuilt = sum(S_bar.values(), np.zeros((graph.N, graph.N))) - sum(S.values(), np.zeros((graph.N, graph.N)))
        assert np.array_equal(rebuilt, graph.H_tilde)
        assert len(S) + len(S_bar) == len(graph.edges)


def test_adjacency_list():
    graph = read_adjacency_list("0 1\n1 2  # follower edge\n\n")
    assert graph.N == 2
    assert graph.H_tilde.tolist() == [[2.0, -1.0], [-1.0, 1.0]]
    assert graph.a0.tolist() == [1, 0]
    assert graph.laplacian[1:, 0].tolist() == [-1.0, 0.0]
    assert sorted(graph.edges) == [(1, 0), (1, 2), (2, 1)]
    assert read_adjacency_list("0 1", n_followers=1).N == 1


@pytest.mark.parametrize("text", ["", "0 1 2", "0 x", "1 1", "0 3"])
def test_adjacency_list_errors(text):
    with pytest.raises(GraphError):
        read_adjacency_list(text, n_followers=2)


def test_permuted_followers():
    graph = read_adjacency_list("0 1\n1 2")
    permuted = permute_followers(graph, [1, 0])
    P = np.array([[0, 1], [1, 0]])
    assert np.array_equal(permuted.H_tilde, P @ graph.H_tilde @ P.T)
    with pytest.raises(GraphError):
        permute_followers(graph, [0, 0])


@pytest.mark.parametrize(
    "adjacency, error",
    [
        ([[0, 0], [0, 0]], NoSpanningTreeError),
        ([[0, 0, 0], [1, 0, 0], [0, 0, 0]], NoSpanningTreeError),
        ([[0, 1], [1, 0]], GraphError),
        ([[0, 0], [1, 1]], GraphError),
        ([[0, 0, 0], [1, 0, 1], [0, 0, 0]], GraphError),
        ([[0, 0], [2, 0]], GraphError),
        ([[0]], GraphError),
    ],
)
def test_graph_validation(adjacency, error):
    with pytest.raises(error):
        laplacian_from_adjacency(adjacency)


def test_model_validation():
    with pytest.raises(ValidationError):
        NoiseModel(np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        NoiseModel.uniform(2, 0.1, LevyMeasure.from_atoms([(-1.0, 1.0)]))
    with pytest.raises(ValidationError):
        ConsensusProtocol(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2))
    with pytest.raises(ValidationError):
        ConsensusProtocol(np.eye(2), np.eye(3))
    graph = star(2)
    with pytest.raises(DimensionMismatchError):
        simulate_network(graph, ConsensusProtocol(np.eye(1), np.eye(1)), NoiseModel.zero(3), lambda x: x, [0.0], [0.0, 0.0], IntegratorConfig(dt=0.1, horizon=1.0))


def test_network_and_error_system_agree():
    graph = read_adjacency_list("0 1\n1 2")
    protocol = ConsensusProtocol(np.array([[1.0, 0.2], [0.2, 0.8]]), np.eye(2))
    noise = NoiseModel.uniform(2, 0.2, LevyMeasure.from_atoms([(0.3, 2.0)]))

    def f(x):
        return -x + 0.5 * np.sin(x)

    x0 = np.array([0.5, -0.2])
    followers = np.array([[1.0, 0.0], [0.0, 1.0]])
    cfg = IntegratorConfig(dt=1e-3, horizon=1.0, master_seed=21)
    network = simulate_network(graph, protocol, noise, f, x0, followers, cfg, path_index=3)
    errors = simulate_error_system(graph, protocol, noise, f, x0, followers - x0, cfg, path_index=3)
    assert np.max(np.abs(network.errors() - errors.X)) <= 1e-8
    assert np.max(np.abs(network.leader - errors.x0)) <= 1e-12


def test_star_graph_noiseless_rate():
    graph = star(3)
    protocol = ConsensusProtocol(np.eye(1), np.eye(1))
    cfg = IntegratorConfig(dt=1e-2, horizon=10.0, master_seed=1)
    report = consentability_verdict(graph, protocol, NoiseModel.zero(3), lambda x: 0.0 * x, cfg, ensemble=4)
    assert report.exponent.value == pytest.approx(-1.0, abs=0.02)
    assert report.consentable
    assert report.fraction_decaying == 1.0
    assert list(report.to_row()) == CONSENSUS_COLUMNS
    assert len(report.distribution()) == 7


def test_without_gain_there_is_no_consensus():
    graph = star(2)
    protocol = ConsensusProtocol(np.zeros((1, 1)), np.eye(1))
    cfg = IntegratorConfig(dt=1e-2, horizon=5.0)
    report = consentability_verdict(graph, protocol, NoiseModel.uniform(2, 0.1), lambda x: 0.0 * x, cfg, ensemble=4)
    assert report.verdict == "not-consentable"
    assert report.exponent.value == pytest.approx(0.0, abs=1e-9)


def test_single_follower_closed_form():
    graph = star(1)
    a, k, sigma = -0.5, 2.0, 0.3
    protocol = ConsensusProtocol(k * np.eye(1), np.eye(1))
    noise = NoiseModel.uniform(1, sigma)
    assert linear_log_drift(a * np.eye(1), graph, protocol, [0.7], noise) == pytest.approx(-(a - k - 0.5 * sigma**2 * k**2))
    assert linear_log_drift(a * np.eye(1), graph, protocol, [0.7]) == pytest.approx(-(a - k))
    assert linear_error_exponent(a * np.eye(1), graph, protocol) == pytest.approx(a - k)
    with pytest.raises(ValidationError):
        linear_log_drift(a * np.eye(1), graph, protocol, [0.0])


def test_single_follower_jump_term():
    graph = star(1)
    protocol = ConsensusProtocol(np.eye(1), np.eye(1))
    noise = NoiseModel.uniform(1, 0.0, LevyMeasure.from_atoms([(0.5, 2.0)]))
    # the edge map is -1, so a jump multiplies X by 1 - 0.5
    expected = -(-1.0) + 2.0 * (-np.log(0.5) - 0.5)
    assert linear_log_drift(np.zeros((1, 1)), graph, protocol, [1.0], noise) == pytest.approx(expected)


def test_dissipativity():
    assert check_dissipativity(lambda y: -2.0 * y, 2) == pytest.approx(-2.0)
    assert check_dissipativity(lambda y: y - y**3, 1, radius=0.5) > 0


def test_relabeled_followers_give_the_same_exponent_distribution():
    graph = read_adjacency_list("0 1\n1 2\n2 3\n0 3")
    relabeled = permute_followers(graph, [2, 0, 1])
    protocol = ConsensusProtocol(np.eye(1), np.eye(1))
    noise = NoiseModel.uniform(3, 0.3, LevyMeasure.from_atoms([(0.2, 1.0)]))

    def slopes(g, seed):
        cfg = IntegratorConfig(dt=1e-2, horizon=5.0, master_seed=seed)
        report = consentability_verdict(g, protocol, noise, lambda x: -0.2 * x, cfg, ensemble=64)
        assert report.n_diverged == 0
        return report.slopes

    original, permuted = slopes(graph, 31), slopes(relabeled, 32)
    assert stats.ks_2samp(original, permuted).pvalue > 1e-3


def test_initial_errors_come_from_each_path_auxiliary_stream():
    graph = star(2)
    cfg = IntegratorConfig(dt=1e-2, horizon=1.0, master_seed=8)
    errors = _random_errors(graph, 2, 0.5, cfg, paths=3)
    assert errors.shape == (3, 2, 2)
    assert np.allclose(np.linalg.norm(errors.reshape(3, -1), axis=1), 0.5)
    direction = make_streams(8, 2).auxiliary.standard_normal((2, 2))
    assert np.allclose(errors[2], 0.5 * direction / np.linalg.norm(direction))
    assert np.array_equal(_random_errors(graph, 2, 0.5, cfg, paths=1)[0], errors[0])
