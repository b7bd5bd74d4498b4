#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mocap/assembly.hpp"
#include "mocap/bench.hpp"
#include "mocap/qp/dense_qp.hpp"
#include "mocap/qp/message_passing.hpp"
#include "test_util.hpp"

using namespace mocap;
using namespace mocap::qp;
using namespace mocap::test;

namespace {

CliqueSubproblem identity_clique(int id, std::vector<VariableGroup> groups) {
  CliqueSubproblem s;
  s.id = id;
  s.groups = std::move(groups);
  const int n = s.dim();
  s.H = MatrixXd::Identity(n, n);
  s.h = VectorXd::Zero(n);
  s.A = MatrixXd(0, n);
  s.b = VectorXd(0);
  return s;
}

}  // namespace

TEST_CASE("identity Hessian examples") {
  SUBCASE("unconstrained minimizer is −h") {
    auto s = identity_clique(0, {{0, 3}});
    s.h << 1.0, -2.0, 0.5;
    const DenseSolution sol = solve_dense(assemble_dense({s}));
    CHECK((sol.z + s.h).norm() <= 1e-14);
    CHECK(sol.lambda.size() == 0);
  }
  SUBCASE("single equality z₁ = 1") {
    auto s = identity_clique(0, {{0, 2}});
    s.A = MatrixXd::Zero(1, 2);
    s.A(0, 0) = 1.0;
    s.b = VectorXd::Constant(1, -1.0);
    const DenseSolution sol = solve_dense(assemble_dense({s}));
    CHECK(sol.z(0) == doctest::Approx(1.0));
    CHECK(sol.z(1) == doctest::Approx(0.0));
    CHECK(sol.lambda(0) == doctest::Approx(-1.0));
  }
  SUBCASE("shared group is summed once per clique") {
    auto a = identity_clique(0, {{0, 1}, {1, 1}});
    auto b = identity_clique(1, {{1, 1}, {2, 1}});
    a.h << 0.0, -2.0;
    const DenseQp qp = assemble_dense({a, b});
    CHECK(qp.n() == 3);
    CHECK(qp.H(1, 1) == 2.0);
    const DenseSolution sol = solve_dense(qp);
    CHECK(sol.z(1) == doctest::Approx(1.0));
  }
}

TEST_CASE("random instances satisfy the KKT conditions") {
  Rng rng(21);
  for (int rep = 0; rep < 30; ++rep) {
    const ChainQp q = random_chain_qp(rng, uniform_int(rng, 1, 30));
    const DenseQp qp = assemble_dense(q.subs);
    const DenseSolution sol = solve_dense(qp);
    CHECK(sol.relative_residual <= 1e-10);
    CHECK(kkt_relative_residual(qp, sol.z, sol.lambda) <= 1e-10);
    CHECK_FALSE(sol.regularized);
  }
}

TEST_CASE("single clique agrees with the clique solver") {
  Rng rng(22);
  for (int rep = 0; rep < 10; ++rep) {
    const ChainQp q = random_chain_qp(rng, 1);
    const DenseSolution d = solve_dense(assemble_dense(q.subs));
    const LocalSolution r = root_solve(q.subs[0], {});
    CHECK((d.z - r.z).lpNorm<Eigen::Infinity>() <= 1e-10);
    CHECK((d.lambda - r.lambda).lpNorm<Eigen::Infinity>() <= 1e-10);
  }
}

TEST_CASE("objective is the sum of the clique objectives") {
  Rng rng(23);
  const ChainQp q = random_chain_qp(rng, 12);
  const DenseQp qp = assemble_dense(q.subs);
  for (int rep = 0; rep < 5; ++rep) {
    const VectorXd z = random_vector(rng, qp.n());
    double sum = 0.0;
    for (const auto& s : q.subs) {
      VectorXd za(s.dim());
      for (const auto& g : s.groups)
        za.segment(s.offset_of(g.id), g.dim) = z.segment(qp.offset.at(g.id), g.dim);
      sum += s.objective(za);
    }
    CHECK(qp.objective(z) == doctest::Approx(sum).epsilon(1e-12));
  }
}

TEST_CASE("size bookkeeping on the full walking problem") {
  const AssembledQp qp = benchmark_qp(7, 373, 1, Ordering::TimeOrdered);
  const DenseSizes s = dense_sizes(qp.subs);
  CHECK(s.state_dim == 40284);
  CHECK(s.joint_rows == 6714);
  CHECK(s.reported_size() == 46998);
  try {
    assemble_dense(qp.subs);
    FAIL("expected DenseSizeError");
  } catch (const DenseSizeError& e) {
    const std::string what = e.what();
    CHECK(what.find("46998") != std::string::npos);
    CHECK(what.find("40284") != std::string::npos);
    CHECK(what.find("6714") != std::string::npos);
    CHECK(e.sizes().reported_size() == 46998);
  }
}

TEST_CASE("inconsistent group sizes are rejected") {
  auto a = identity_clique(0, {{0, 2}});
  auto b = identity_clique(1, {{0, 3}});
  CHECK_THROWS_AS(dense_sizes({a, b}), std::invalid_argument);
}

TEST_CASE("singular systems") {
  SUBCASE("zero Hessian with a nonzero gradient") {
    auto s = identity_clique(0, {{0, 2}});
    s.H.setZero();
    s.h << 1.0, 0.0;
    try {
      solve_dense(assemble_dense({s}));
      FAIL("expected SingularKktError");
    } catch (const SingularKktError& e) {
      CHECK(e.rank_deficiency() == 2);
    }
  }
  SUBCASE("PSD-singular but consistent is regularized") {
    auto s = identity_clique(0, {{0, 2}});
    s.H(1, 1) = 0.0;
    s.h << 1.0, 0.0;
    const DenseSolution sol = solve_dense(assemble_dense({s}));
    CHECK(sol.relative_residual <= 1e-10);
    CHECK(sol.z(0) == doctest::Approx(-1.0));
  }
}

TEST_CASE("sparsity pattern") {
  auto a = identity_clique(0, {{0, 1}, {1, 1}});
  a.A = MatrixXd::Ones(1, 2);
  a.b = VectorXd::Zero(1);
  const std::string p = sparsity_pattern(assemble_dense({a}), 64);
  CHECK(p == "#.#\n.##\n##.\n");
}
