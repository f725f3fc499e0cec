#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>

#include "nhqm/operator.hpp"
#include "test_helpers.hpp"

using namespace nhqm;

namespace {

// Independent oracle: largest singular value by full Jacobi SVD.
double svd_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues().maxCoeff();
}

Matrix mat2(complex a, complex b, complex c, complex d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST_CASE("construction rejects non-finite and non-square input") {
  Matrix bad = mat2(1.0, std::nan(""), 0.0, 0.0);
  CHECK_THROWS_AS(Operator(bad, "t"), error);
  CHECK_THROWS_AS(Operator(Matrix::Zero(2, 3), "t"), error);
  CHECK_NOTHROW(Operator(Matrix::Zero(2, 2), "t"));
}

TEST_CASE("binary operations require matching basis tags") {
  Operator a = Operator::identity(2, "qubit1");
  Operator b = Operator::identity(2, "fock:N=2,k=1");
  CHECK_THROWS_AS(a + b, error);
  CHECK_THROWS_AS(a - b, error);
  CHECK_THROWS_AS(a * b, error);
  CHECK_NOTHROW(a + a);
}

TEST_CASE("adjoint on closed forms") {
  Operator a(mat2(0, 2, 0, 0), "t");
  Matrix want = mat2(0, 0, 2, 0);
  CHECK((adjoint(a).mat() - want).norm() == 0.0);

  Operator b(complex(0, 1) * Matrix::Identity(2, 2), "t");
  CHECK((adjoint(b).mat() + complex(0, 1) * Matrix::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("adjoint fixes Hermitian matrices and is an involution") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix g = test::random_complex_matrix(6, rng);
    Operator h(g + g.adjoint().eval(), "t");
    CHECK((adjoint(h).mat() - h.mat()).cwiseAbs().maxCoeff() == 0.0);
    Operator a(test::random_complex_matrix(6, rng), "t");
    CHECK((adjoint(adjoint(a)).mat() - a.mat()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("operator norm on closed forms") {
  Matrix sz = mat2(1, 0, 0, -1);
  CHECK(operator_norm(Operator(sz, "t")) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(operator_norm(Operator(mat2(0, 2, 0, 0), "t")) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(operator_norm(Operator::zero(3, "t")) == 0.0);
}

TEST_CASE("operator norm matches SVD oracle (exact path, dim <= 64)") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    Operator a(test::random_complex_matrix(8, rng), "t");
    const double want = svd_norm(a.mat());
    CHECK(operator_norm(a) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("operator norm matches SVD oracle (iterative path, dim > 64)") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 3; ++trial) {
    Operator a(test::random_complex_matrix(90, rng), "t");
    const double want = svd_norm(a.mat());
    CHECK(operator_norm(a) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("iterative norm survives a degenerate top singular value") {
  // unitary similarity of diag(5, 5, 5, 4.9999, ...) has a triple top
  std::mt19937_64 rng(44);
  const Eigen::Index n = 80;
  Eigen::VectorXd s(n);
  s(0) = 5.0; s(1) = 5.0; s(2) = 5.0; s(3) = 4.9999;
  for (Eigen::Index i = 4; i < n; ++i) s(i) = 4.0 * (n - i) / double(n);
  Matrix u = test::random_unitary(n, rng), v = test::random_unitary(n, rng);
  Operator a(u * s.asDiagonal() * v.adjoint(), "t");
  CHECK(operator_norm(a) == doctest::Approx(5.0).epsilon(1e-10));
}

TEST_CASE("norm falls back to the dense path when the top cluster is wide") {
  // twenty equal top singular values exceed the iteration block; the result
  // must still be certified, for real and complex input alike
  std::mt19937_64 rng(45);
  const Eigen::Index n = 90;
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) s(i) = i < 20 ? 3.0 : 3.0 - 1e-9 * (i - 19);
  Matrix u = test::random_unitary(n, rng), v = test::random_unitary(n, rng);
  Operator a(u * s.asDiagonal() * v.adjoint(), "t");
  CHECK(operator_norm(a) == doctest::Approx(3.0).epsilon(1e-10));

  Eigen::MatrixXd ur = Eigen::MatrixXd::Identity(n, n), vr = ur;
  std::normal_distribution<double> nd;
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = nd(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  ur = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  Operator b((ur * s.asDiagonal() * ur.transpose()).cast<complex>(), "t");
  CHECK(operator_norm(b) == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("frobenius norm closed forms and trace oracle") {
  CHECK(frobenius_norm(Operator::identity(4, "t")) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(frobenius_norm(Operator(mat2(0, 2, 0, 0), "t")) == doctest::Approx(2.0));

  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    Operator a(test::random_complex_matrix(7, rng), "t");
    const double want = std::sqrt((a.mat().adjoint() * a.mat()).trace().real());
    CHECK(frobenius_norm(a) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("norm inequalities on random pairs") {
  std::mt19937_64 rng(66);
  for (int trial = 0; trial < 20; ++trial) {
    Operator a(test::random_complex_matrix(6, rng), "t");
    Operator b(test::random_complex_matrix(6, rng), "t");
    CHECK(operator_norm(a * b) <= operator_norm(a) * operator_norm(b) + 1e-9);
    CHECK(operator_norm(a) <= frobenius_norm(a) + 1e-12);
    CHECK(frobenius_norm(a) <= std::sqrt(6.0) * operator_norm(a) + 1e-9);
  }
}

TEST_CASE("adjoint is an isometry for both norms") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    Operator a(test::random_complex_matrix(9, rng), "t");
    CHECK(operator_norm(adjoint(a)) == doctest::Approx(operator_norm(a)).epsilon(1e-10));
    CHECK(frobenius_norm(adjoint(a)) == doctest::Approx(frobenius_norm(a)).epsilon(1e-13));
  }
}
