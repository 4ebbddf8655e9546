#include <doctest.h>

#include <cmath>
#include <random>
#include <algorithm>
#include <map>
#include <set>

#include "conxgnn/inception_graph.hpp"
#include "oracles.hpp"

using namespace conxgnn;

namespace {

ModalityMatrices random_reps(Index len, Index d, std::mt19937_64& rng) {
  return {oracle::random_matrix(len, d, rng), oracle::random_matrix(len, d, rng), oracle::random_matrix(len, d, rng)};
}

std::set<oracle::OracleEdge> as_oracle_edges(const RelationalGraph& g) {
  std::set<oracle::OracleEdge> out;
  for (const Edge& e : g.edges()) {
    const RelationType t = relation_type(e.relation);
    const int kind = t.kind == RelationKind::inter ? 0 : t.kind == RelationKind::intra_past ? 1 : 2;
    out.insert({e.src, e.dst, kind, static_cast<int>(t.from), static_cast<int>(t.to)});
  }
  return out;
}

std::vector<oracle::WeightedEdge> weighted(const RelationalGraph& g) {
  std::vector<oracle::WeightedEdge> out;
  for (const Edge& e : g.edges()) out.push_back({e.src, e.dst, e.relation, e.weight});
  return out;
}

std::size_t count_kind(const RelationalGraph& g, RelationKind kind, Modality m) {
  std::size_t n = 0;
  for (const Edge& e : g.edges()) {
    const RelationType t = relation_type(e.relation);
    n += t.kind == kind && t.to == m;
  }
  return n;
}

KgnnLayerParams random_kgnn(Index d, std::mt19937_64& rng) {
  KgnnLayerParams p;
  for (int r = 0; r < kNumRelations; ++r) {
    p.self_weight.emplace_back("w0", oracle::random_matrix(d, d, rng, 0.5));
    p.neighbour_weight.emplace_back("w1", oracle::random_matrix(d, d, rng, 0.5));
  }
  return p;
}

GraphTransformerParams random_transformer(Index d, int heads, std::mt19937_64& rng) {
  GraphTransformerParams p;
  p.heads = heads;
  p.skip = Parameter("w2", oracle::random_matrix(d, d, rng, 0.5));
  p.value = Parameter("w3", oracle::random_matrix(d, d, rng, 0.5));
  p.query = Parameter("w4", oracle::random_matrix(d, d, rng, 0.5));
  p.key = Parameter("w5", oracle::random_matrix(d, d, rng, 0.5));
  return p;
}

std::vector<Matrix> values(const std::vector<Parameter>& ps) {
  std::vector<Matrix> out;
  for (const auto& p : ps) out.push_back(p.value);
  return out;
}

}  // namespace

TEST_CASE("twelve distinct relation types") {
  std::set<std::string> names;
  int inter = 0, past = 0, future = 0;
  for (int r = 0; r < kNumRelations; ++r) {
    const RelationType t = relation_type(r);
    CHECK(relation_index(t) == r);
    names.insert(relation_name(r));
    if (t.kind == RelationKind::inter) {
      ++inter;
      CHECK(t.from != t.to);
    } else {
      CHECK(t.from == t.to);
      (t.kind == RelationKind::intra_past ? past : future)++;
    }
  }
  CHECK(names.size() == 12);
  CHECK(inter == 6);
  CHECK(past == 3);
  CHECK(future == 3);
  CHECK_THROWS(relation_type(12));
}

TEST_CASE("angular edge weight") {
  Eigen::Vector3d u(1.0, 2.0, -0.5), v(-2.0, 1.0, 0.0);
  CHECK(angular_edge_weight(u, u) == doctest::Approx(1.0));
  CHECK(angular_edge_weight(u, v) == doctest::Approx(0.5));
  CHECK(angular_edge_weight(u, Eigen::Vector3d(-u)) == doctest::Approx(0.0));
  CHECK(angular_edge_weight(u, Eigen::Vector3d::Zero().eval()) == 0.5);
  // Rounding never produces NaN for (nearly) parallel vectors.
  Eigen::Vector3d w = 3.0000000001 * u;
  CHECK(std::isfinite(angular_edge_weight(u, w)));
  std::mt19937_64 rng(5);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd a = oracle::random_matrix(4, 1, rng), b = oracle::random_matrix(4, 1, rng);
    const double ab = angular_edge_weight(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(ab == angular_edge_weight(b, a));
  }
}

TEST_CASE("graph construction equals exhaustive predicate enumeration") {
  std::mt19937_64 rng(1);
  for (Index len = 1; len <= 6; ++len) {
    const ModalityMatrices reps = random_reps(len, 3, rng);
    const Matrix nodes = interleave_nodes(reps);
    for (int p = 1; p <= 6; ++p)
      for (int f = 1; f <= 6; ++f) {
        const RelationalGraph g = build_graph(reps, {p, f});
        CHECK(g.num_nodes() == 3 * len);
        CHECK(as_oracle_edges(g) == oracle::enumerate_edges(len, p, f));
        CHECK(g.edges().size() == oracle::enumerate_edges(len, p, f).size());
        for (const Edge& e : g.edges()) {
          CHECK(e.weight == doctest::Approx(oracle::angular(nodes, e.src, nodes, e.dst)).epsilon(1e-12));
        }
      }
  }
}

TEST_CASE("graph examples") {
  std::mt19937_64 rng(2);
  SUBCASE("single utterance") {
    const RelationalGraph g = build_graph(random_reps(1, 4, rng), {3, 3});
    CHECK(g.edges().size() == 6);
    for (const Edge& e : g.edges()) CHECK(relation_type(e.relation).kind == RelationKind::inter);
  }
  SUBCASE("L=3 window (2,1)") {
    const RelationalGraph g = build_graph(random_reps(3, 4, rng), {2, 1});
    for (Modality m : kModalities) {
      std::set<std::pair<Index, Index>> past;
      for (const Edge& e : g.edges()) {
        const RelationType t = relation_type(e.relation);
        if (t.kind == RelationKind::intra_past && t.to == m) past.insert({e.src / 3, e.dst / 3});
      }
      CHECK(past == std::set<std::pair<Index, Index>>{{0, 1}, {1, 2}});
      CHECK(count_kind(g, RelationKind::intra_future, m) == 0);
    }
  }
  SUBCASE("window wider than the conversation") {
    const RelationalGraph g = build_graph(random_reps(4, 4, rng), {10, 9});
    for (Modality m : kModalities) {
      CHECK(count_kind(g, RelationKind::intra_past, m) == 6);
      CHECK(count_kind(g, RelationKind::intra_future, m) == 6);
    }
  }
  SUBCASE("empty conversation") {
    CHECK_THROWS(build_graph(random_reps(0, 4, rng), {1, 1}));
  }
}

TEST_CASE("enlarging a window never removes edges") {
  std::mt19937_64 rng(3);
  const ModalityMatrices reps = random_reps(6, 3, rng);
  for (int p = 1; p <= 5; ++p)
    for (int f = 1; f <= 5; ++f) {
      const auto small = as_oracle_edges(build_graph(reps, {p, f}));
      const auto big = as_oracle_edges(build_graph(reps, {p + 1, f + 1}));
      CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
    }
}

TEST_CASE("opposite edges carry equal weights") {
  std::mt19937_64 rng(4);
  const RelationalGraph g = build_graph(random_reps(5, 4, rng), {4, 4});
  std::map<std::pair<Index, Index>, double> w;
  for (const Edge& e : g.edges()) w[{e.src, e.dst}] = e.weight;
  for (const auto& [key, value] : w) {
    auto it = w.find({key.second, key.first});
    if (it != w.end()) CHECK(it->second == value);
  }
}

TEST_CASE("k-GNN layer matches the brute-force oracle") {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> small(1, 4);
  for (int trial = 0; trial < 120; ++trial) {
    const Index len = small(rng), d = 3;
    const ModalityMatrices reps = random_reps(len, d, rng);
    const RelationalGraph g = build_graph(reps, {small(rng), small(rng)});
    const KgnnLayerParams p = random_kgnn(d, rng);
    const Matrix nodes = interleave_nodes(reps);
    Tape tape(false);
    const Matrix got = kgnn_layer(tape, g, tape.constant(nodes), p).value();
    const Matrix want = oracle::kgnn(nodes, weighted(g), values(p.self_weight), values(p.neighbour_weight));
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("k-GNN examples") {
  std::mt19937_64 rng(11);
  const ModalityMatrices reps = random_reps(3, 4, rng);
  const Matrix nodes = interleave_nodes(reps);
  Tape tape(false);
  SUBCASE("zero weights give zero output") {
    KgnnLayerParams p = random_kgnn(4, rng);
    for (auto& w : p.self_weight) w.value.setZero();
    for (auto& w : p.neighbour_weight) w.value.setZero();
    CHECK(kgnn_layer(tape, build_graph(reps, {2, 2}), tape.constant(nodes), p).value().isZero(0.0));
  }
  SUBCASE("one active relation with two in-neighbours halves the node") {
    // Node 0 receives two edges of relation 0 only; the rest get one edge each.
    std::vector<Edge> edges{{3, 0, 0, 0.7}, {6, 0, 0, 0.2}};
    for (Index n = 1; n < 9; ++n) edges.push_back({0, n, 1, 0.5});
    const RelationalGraph g(3, edges);
    KgnnLayerParams p = random_kgnn(4, rng);
    p.self_weight[0].value.setIdentity();
    p.neighbour_weight[0].value.setZero();
    const Matrix out = kgnn_layer(tape, g, tape.constant(nodes), p).value();
    CHECK((out.row(0) - nodes.row(0) / 2.0).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("isolated nodes are rejected") {
    const RelationalGraph g(3, {{3, 0, 0, 0.7}});
    CHECK_THROWS(kgnn_layer(tape, g, tape.constant(nodes), random_kgnn(4, rng)));
  }
}

TEST_CASE("graph transformer matches the dense attention oracle") {
  std::mt19937_64 rng(20);
  std::uniform_int_distribution<int> small(1, 4);
  for (int trial = 0; trial < 120; ++trial) {
    const int heads = trial % 2 == 0 ? 1 : 2;
    const Index len = small(rng), d = 4;
    const ModalityMatrices reps = random_reps(len, d, rng);
    const RelationalGraph g = build_graph(reps, {small(rng), small(rng)});
    const GraphTransformerParams p = random_transformer(d, heads, rng);
    const Matrix nodes = interleave_nodes(reps);
    Tape tape(false);
    const Matrix got = graph_transformer_layer(tape, g, tape.constant(nodes), p).value();
    const Matrix want = oracle::graph_transformer(nodes, weighted(g), p.skip.value, p.value.value, p.query.value,
                                                  p.key.value, heads);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("graph transformer examples") {
  std::mt19937_64 rng(21);
  const ModalityMatrices reps = random_reps(2, 4, rng);
  const Matrix nodes = interleave_nodes(reps);
  Tape tape(false);
  SUBCASE("identity skip, zero value") {
    GraphTransformerParams p = random_transformer(4, 1, rng);
    p.skip.value.setIdentity();
    p.value.value.setZero();
    const Matrix out = graph_transformer_layer(tape, build_graph(reps, {1, 1}), tape.constant(nodes), p).value();
    CHECK((out - nodes).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("equal keys split attention evenly") {
    GraphTransformerParams p = random_transformer(4, 1, rng);
    p.key.value.col(0).setZero();  // keys ignore coordinate 0
    Matrix g = nodes;
    g.row(4) = g.row(3);
    g(4, 0) += 1.5;  // nodes 3 and 4 differ only where the key is blind
    const RelationalGraph graph(2, {{3, 0, 0, 1.0}, {4, 0, 1, 1.0}, {0, 1, 0, 1.0}, {0, 2, 0, 1.0}, {0, 3, 0, 1.0},
                                    {0, 4, 0, 1.0}, {0, 5, 0, 1.0}});
    const Matrix out = graph_transformer_layer(tape, graph, tape.constant(g), p).value();
    const Matrix want = g.row(0) * p.skip.value.transpose() +
                        0.5 * (g.row(3) + g.row(4)) * p.value.value.transpose();
    CHECK((out.row(0) - want).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("IGM averages branch outputs") {
  std::mt19937_64 rng(30);
  const Index len = 6, d = 8;
  const ModalityMatrices reps = random_reps(len, d, rng);
  const std::vector<Window> windows{{10, 9}, {5, 3}, {3, 2}};
  const IgmParams params = init_igm(d, windows.size(), 2, 4, rng);
  const std::vector<RelationalGraph> graphs = build_graphs(reps, windows);
  Tape tape(false);
  ModalityVars in{tape.constant(reps.text), tape.constant(reps.audio), tape.constant(reps.visual)};
  const ModalityVars out = igm_forward(tape, in, graphs, params);

  Matrix mean = Matrix::Zero(3 * len, d);
  for (std::size_t b = 0; b < 3; ++b) {
    Tape t(false);
    mean += igm_branch(t, graphs[b], t.constant(interleave_nodes(reps)), params.branches[b]).value() / 3.0;
  }
  for (Modality m : kModalities)
    for (Index i = 0; i < len; ++i)
      CHECK((out[m].value().row(i) - mean.row(node_id(i, m))).cwiseAbs().maxCoeff() < 1e-12);

  SUBCASE("one branch is returned unchanged") {
    IgmParams one;
    one.branches = {params.branches[1]};
    const std::vector<RelationalGraph> g1{graphs[1]};
    const ModalityVars o = igm_forward(tape, in, g1, one);
    const Matrix branch = igm_branch(tape, graphs[1], tape.constant(interleave_nodes(reps)), params.branches[1]).value();
    for (Modality m : kModalities)
      for (Index i = 0; i < len; ++i) CHECK(o[m].value().row(i) == branch.row(node_id(i, m)));
  }
  SUBCASE("two identical branches equal one") {
    IgmParams two;
    two.branches = {params.branches[0], params.branches[0]};
    const std::vector<RelationalGraph> g2{graphs[0], graphs[0]};
    const ModalityVars o = igm_forward(tape, in, g2, two);
    const Matrix branch = igm_branch(tape, graphs[0], tape.constant(interleave_nodes(reps)), params.branches[0]).value();
    for (Modality m : kModalities)
      for (Index i = 0; i < len; ++i)
        CHECK((o[m].value().row(i) - branch.row(node_id(i, m))).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("no windows") {
    CHECK_THROWS(igm_forward(tape, in, {}, IgmParams{}));
  }
}

TEST_CASE("interleave and deinterleave are inverse") {
  std::mt19937_64 rng(40);
  const ModalityMatrices reps = random_reps(4, 3, rng);
  Tape tape(false);
  const Matrix nodes = interleave_nodes(reps);
  CHECK(nodes.row(node_id(2, Modality::audio)) == reps.audio.row(2));
  const ModalityVars back = deinterleave_nodes(tape.constant(nodes));
  for (Modality m : kModalities) CHECK(back[m].value() == reps[m]);
}
