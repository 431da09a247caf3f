#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "ntrf/common.hpp"
#include "ntrf/io.hpp"
#include "ntrf/tensor.hpp"
#include "test_support.hpp"

namespace ntrf {
namespace {

TEST(Tensor, FlattenAssignRoundTrip) {
  Eigen::MatrixXd a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  Eigen::VectorXd b(2);
  b << 7, 8;
  const std::vector<TensorRef> refs = {tensor_ref("a", a), tensor_ref("b", b)};
  EXPECT_EQ(total_size(refs), 8u);
  const std::vector<ConstTensorRef> crefs = {tensor_ref("a", std::as_const(a)),
                                             tensor_ref("b", std::as_const(b))};
  const auto flat = flatten(crefs);
  EXPECT_EQ(flat, (std::vector<double>{1, 4, 2, 5, 3, 6, 7, 8}));
  EXPECT_DOUBLE_EQ(squared_norm(crefs), 204.0);
  std::vector<double> doubled;
  for (double v : flat) doubled.push_back(2 * v);
  assign(refs, doubled);
  EXPECT_EQ(a(1, 2), 12.0);
  EXPECT_EQ(b(1), 16.0);
}

TEST(Tensor, JsonRoundTripChecksNamesAndShapes) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(3, 2);
  const auto doc = tensors_to_json({tensor_ref("a", std::as_const(a))});
  Eigen::MatrixXd back = Eigen::MatrixXd::Zero(3, 2);
  tensors_from_json(doc, {tensor_ref("a", back)});
  EXPECT_EQ(back, a);
  Eigen::MatrixXd wrong(2, 3);
  EXPECT_THROW(tensors_from_json(doc, {tensor_ref("a", wrong)}), Error);
  EXPECT_THROW(tensors_from_json(doc, {tensor_ref("b", back)}), Error);
}

TEST(Tensor, FirstNonFinite) {
  Eigen::VectorXd a = Eigen::VectorXd::Ones(3);
  Eigen::VectorXd b = Eigen::VectorXd::Ones(2);
  EXPECT_EQ(first_non_finite({tensor_ref("a", std::as_const(a)), tensor_ref("b", std::as_const(b))}),
            "");
  b(1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(first_non_finite({tensor_ref("a", std::as_const(a)), tensor_ref("b", std::as_const(b))}),
            "b");
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> x = {1.0, -2.0, 0.0};
  const std::vector<double> g = {0.3, -5.0, 0.0};
  Adam adam(3);
  adam.step(x, g, 0.1);
  EXPECT_NEAR(x[0], 0.9, 1e-7);
  EXPECT_NEAR(x[1], -1.9, 1e-7);
  EXPECT_EQ(x[2], 0.0);
}

TEST(Adam, MinimizesAQuadratic) {
  std::vector<double> x = {3.0, -4.0};
  Adam adam(2);
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> g = {2 * (x[0] - 1.0), 2 * (x[1] + 0.5)};
    adam.step(x, g, 0.05);
  }
  EXPECT_NEAR(x[0], 1.0, 1e-3);
  EXPECT_NEAR(x[1], -0.5, 1e-3);
}

TEST(Sgd, StepsAgainstTheGradient) {
  Eigen::VectorXd p(2);
  p << 1.0, 1.0;
  Eigen::VectorXd g(2);
  g << 0.5, -1.0;
  sgd_step({tensor_ref("p", p)}, {tensor_ref("p", std::as_const(g))}, 0.1);
  EXPECT_DOUBLE_EQ(p(0), 0.95);
  EXPECT_DOUBLE_EQ(p(1), 1.1);
}

TEST(Io, AtomicWriteAndFormatCheck) {
  testing::TempDir dir;
  write_json_atomic(dir / "x.json", {{"format", "demo"}, {"version", 1}});
  const auto doc = read_json(dir / "x.json");
  EXPECT_NO_THROW(check_format(doc, "demo", 1));
  EXPECT_THROW(check_format(doc, "demo", 2), Error);
  EXPECT_THROW(check_format(doc, "other", 1), Error);
  EXPECT_FALSE(std::filesystem::exists(dir / "x.json.tmp"));
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_THROW(read_json(dir / "bad.json"), Error);
  EXPECT_EQ(resolve_beside(dir / "x.json", "y.txt"), dir / "y.txt");
}

}  // namespace
}  // namespace ntrf
