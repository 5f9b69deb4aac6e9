#include "kgnn/dynamics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

using namespace kgnn;

namespace {

std::shared_ptr<const CouplingMatrix> random_coupling(const Graph& g, std::mt19937_64& rng) {
    AttentionParams p;
    p.heads.push_back({oracle::random_matrix(2, 3, rng), oracle::random_matrix(2, 3, rng)});
    return std::make_shared<CouplingMatrix>(compute_attention(oracle::random_matrix(g.num_nodes(), 3, rng), p, g));
}

std::shared_ptr<const CouplingMatrix> two_node_uniform() {
    auto g = Graph::from_edges(2, {{0, 1}, {1, 0}}, Matrix::Zero(2, 1), {0, 0}, 1);
    return std::make_shared<CouplingMatrix>(uniform_coupling(g, false));
}

DynamicsSpec spec_of(DynamicsKind kind, std::shared_ptr<const CouplingMatrix> a, double K = 1.0) {
    DynamicsSpec s;
    s.kind = kind;
    s.coupling = std::move(a);
    s.coupling_strength = K;
    return s;
}

}  // namespace

TEST(Kuramoto, TwoNodeHandValue) {
    auto s = spec_of(DynamicsKind::kuramoto, two_node_uniform(), 2.0);
    s.omega = Matrix::Constant(2, 1, 0.5);
    Matrix x(2, 1);
    x << 0.0, M_PI / 2;
    auto r = rhs_kuramoto(x, s);
    EXPECT_NEAR(r(0, 0), 0.5 + 2.0, 1e-15);
    EXPECT_NEAR(r(1, 0), 0.5 - 2.0, 1e-15);
}

TEST(Kuramoto, SynchronizedStateGivesOmega) {
    std::mt19937_64 rng(1);
    auto g = oracle::random_graph(8, 1, 2, 0.3, rng);
    auto s = spec_of(DynamicsKind::kuramoto, random_coupling(g, rng), 3.0);
    s.omega = oracle::random_matrix(8, 2, rng);
    Matrix x = Matrix::Constant(8, 2, 0.7);
    EXPECT_LT((rhs_kuramoto(x, s) - *s.omega).cwiseAbs().maxCoeff(), 1e-15);
    auto id = spec_of(DynamicsKind::kuramoto_identical, s.coupling, 3.0);
    EXPECT_LT(rhs_identical(x, id).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Kuramoto, MatchesDenseOracle) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        auto g = oracle::random_graph(9, 1, 2, 0.3, rng);
        auto s = spec_of(DynamicsKind::kuramoto, random_coupling(g, rng), 0.5 + trial * 0.1);
        s.omega = oracle::random_matrix(9, 3, rng);
        Matrix x = oracle::random_matrix(9, 3, rng, -M_PI, M_PI);
        Matrix dense = s.coupling->to_dense();
        Matrix ref = oracle::kuramoto(x, dense, &*s.omega, s.coupling_strength);
        EXPECT_LT((rhs_kuramoto(x, s) - ref).cwiseAbs().maxCoeff(), 1e-13);
        auto id = spec_of(DynamicsKind::kuramoto_identical, s.coupling, s.coupling_strength);
        EXPECT_LT((rhs_identical(x, id) - oracle::kuramoto(x, dense, nullptr, s.coupling_strength))
                      .cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(Kuramoto, LocalOrderParameterFormAgrees) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = oracle::random_graph(10, 1, 2, 0.3, rng);
        auto s = spec_of(DynamicsKind::kuramoto, random_coupling(g, rng), 2.0);
        s.omega = oracle::random_matrix(10, 2, rng);
        Matrix x = oracle::random_matrix(10, 2, rng, -10, 10);
        EXPECT_LE((rhs_kuramoto_local_order(x, s) - rhs_kuramoto(x, s)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Kuramoto, PhaseShiftInvariance) {
    std::mt19937_64 rng(4);
    auto g = oracle::random_graph(7, 1, 2, 0.4, rng);
    auto s = spec_of(DynamicsKind::kuramoto, random_coupling(g, rng));
    s.omega = oracle::random_matrix(7, 2, rng);
    Matrix x = oracle::random_matrix(7, 2, rng);
    Matrix shifted = x.array() + 1.234;
    EXPECT_LT((rhs_kuramoto(x, s) - rhs_kuramoto(shifted, s)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Kuramoto, MissingFieldsThrow) {
    auto s = spec_of(DynamicsKind::kuramoto, two_node_uniform());
    EXPECT_THROW(rhs_kuramoto(Matrix::Zero(2, 1), s), InvalidInput);  // omega absent
    s.omega = Matrix::Zero(3, 1);
    EXPECT_THROW(rhs_kuramoto(Matrix::Zero(2, 1), s), InvalidInput);
    s.omega = Matrix::Zero(2, 1);
    EXPECT_THROW(rhs_kuramoto(Matrix::Zero(3, 1), s), InvalidInput);
    s.coupling = nullptr;
    EXPECT_THROW(rhs_kuramoto(Matrix::Zero(2, 1), s), InvalidInput);
    auto m = spec_of(DynamicsKind::grand_modified, two_node_uniform());
    EXPECT_THROW(rhs_grand_modified(Matrix::Zero(2, 1), m), InvalidInput);
    EXPECT_THROW(rhs_identical(Matrix::Zero(2, 1), m), InvalidInput);  // wrong kind
}

TEST(Grand, LinearHandValueAndDispatch) {
    auto s = spec_of(DynamicsKind::grand_linear, two_node_uniform());
    Matrix x(2, 1);
    x << 1.0, 3.0;
    auto r = rhs_grand_linear(x, s);
    EXPECT_DOUBLE_EQ(r(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(r(1, 0), -2.0);
    EXPECT_EQ(evaluate_rhs(x, s), r);
}

TEST(Grand, ModifiedReducesToLinear) {
    std::mt19937_64 rng(5);
    auto g = oracle::random_graph(8, 1, 2, 0.3, rng);
    auto a = random_coupling(g, rng);
    Matrix x = oracle::random_matrix(8, 3, rng);
    auto m = spec_of(DynamicsKind::grand_modified, a);
    m.alpha = 1.0;
    m.beta = 0.0;
    m.x0 = oracle::random_matrix(8, 3, rng);
    auto l = spec_of(DynamicsKind::grand_linear, a);
    EXPECT_LT((rhs_grand_modified(x, m) - rhs_grand_linear(x, l)).cwiseAbs().maxCoeff(), 1e-15);
    m.alpha = 0.5;
    m.beta = 2.0;
    Matrix ref = 0.5 * (a->to_dense() * x - x) + 2.0 * *m.x0;
    EXPECT_LT((rhs_grand_modified(x, m) - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Linearization, CubicScaling) {
    std::mt19937_64 rng(6);
    auto g = oracle::random_graph(10, 1, 2, 0.3, rng);
    auto a = random_coupling(g, rng);
    auto id = spec_of(DynamicsKind::kuramoto_identical, a, 1.0);
    auto lin = spec_of(DynamicsKind::grand_linear, a);
    Matrix dir = oracle::random_matrix(10, 2, rng);
    auto err = [&](double eps) {
        Matrix x = eps * dir;
        return (rhs_identical(x, id) - rhs_grand_linear(x, lin)).cwiseAbs().maxCoeff();
    };
    const double ratio = err(1e-2) / err(1e-3);
    EXPECT_GE(ratio, 500.0);
    EXPECT_LE(ratio, 2000.0);
}

TEST(Energy, ZeroAtSyncAndHandValue) {
    auto a = two_node_uniform();
    EXPECT_DOUBLE_EQ(energy_U(Matrix::Constant(2, 1, 0.3), *a)[0], 0.0);
    Matrix x(2, 1);
    x << 0.0, M_PI;
    // ordered pairs (0,1) and (1,0), each weight 1 and 1 - cos(pi) = 2
    EXPECT_NEAR(energy_U(x, *a)[0], 2.0, 1e-15);
}

TEST(Energy, GradientIdentityOnSymmetricCoupling) {
    std::mt19937_64 rng(7);
    auto g = oracle::random_graph(8, 1, 2, 0.4, rng);
    // symmetric weights: 1 on every edge, no self-loops
    auto sym = std::make_shared<CouplingMatrix>(CouplingMatrix::support_of(g, false));
    for (auto& v : sym->val) v = 0.3;
    auto s = spec_of(DynamicsKind::kuramoto_identical, sym, 2.0);
    auto res = energy_gradient_identity_check(oracle::random_matrix(8, 2, rng, -3, 3), s, 1e-5);
    EXPECT_TRUE(res.hypothesis_holds);
    EXPECT_LT(res.max_residual, 1e-8);

    auto asym = spec_of(DynamicsKind::kuramoto_identical, random_coupling(g, rng));
    EXPECT_FALSE(energy_gradient_identity_check(Matrix::Zero(8, 1), asym, 1e-5).hypothesis_holds);
}

TEST(DynamicsKind, RoundTrip) {
    for (auto k : {DynamicsKind::kuramoto, DynamicsKind::kuramoto_identical, DynamicsKind::grand_linear,
                   DynamicsKind::grand_modified})
        EXPECT_EQ(parse_dynamics_kind(to_string(k)), k);
    EXPECT_THROW(parse_dynamics_kind("gcn"), InvalidInput);
}
