#include "ntrf/lstm_cell.hpp"

namespace ntrf {

LstmWeights LstmWeights::zeros(Eigen::Index in, Eigen::Index hidden) {
  return {Eigen::MatrixXd::Zero(4 * hidden, in), Eigen::MatrixXd::Zero(4 * hidden, hidden),
          Eigen::VectorXd::Zero(4 * hidden)};
}

void LstmWeights::append_tensors(const std::string& prefix, std::vector<TensorRef>& out) {
  out.push_back(tensor_ref(prefix + ".input", input));
  out.push_back(tensor_ref(prefix + ".recurrent", recurrent));
  out.push_back(tensor_ref(prefix + ".bias", bias));
}

void LstmWeights::append_tensors(const std::string& prefix,
                                 std::vector<ConstTensorRef>& out) const {
  out.push_back(tensor_ref(prefix + ".input", input));
  out.push_back(tensor_ref(prefix + ".recurrent", recurrent));
  out.push_back(tensor_ref(prefix + ".bias", bias));
}

namespace {

double logistic(double z) { return sigmoid(z); }

}  // namespace

void lstm_forward(const LstmWeights& w, const Eigen::MatrixXd& inputs, bool reversed,
                  LstmTrace& trace) {
  const Eigen::Index h = w.hidden();
  const Eigen::Index T = inputs.cols();
  if (inputs.rows() != w.input_size()) throw Error("lstm_forward: input width mismatch");
  trace.inputs = inputs;
  trace.reversed = reversed;
  trace.gates.resize(4 * h, T);
  trace.cells.resize(h, T);
  trace.hidden.resize(h, T);

  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd z(4 * h);
  for (Eigen::Index step = 0; step < T; ++step) {
    const Eigen::Index pos = reversed ? T - 1 - step : step;
    z.noalias() = w.input * inputs.col(pos);
    z.noalias() += w.recurrent * h_prev;
    z += w.bias;
    auto gates = trace.gates.col(step);
    for (Eigen::Index r = 0; r < h; ++r) {
      gates(r) = logistic(z(r));
      gates(h + r) = logistic(z(h + r));
      gates(2 * h + r) = std::tanh(z(2 * h + r));
      gates(3 * h + r) = logistic(z(3 * h + r));
    }
    auto c = trace.cells.col(step);
    c = gates.segment(h, h).cwiseProduct(c_prev) +
        gates.segment(0, h).cwiseProduct(gates.segment(2 * h, h));
    trace.hidden.col(pos) = gates.segment(3 * h, h).cwiseProduct(c.array().tanh().matrix());
    h_prev = trace.hidden.col(pos);
    c_prev = c;
  }
}

void lstm_backward(const LstmWeights& w, const LstmTrace& trace, const Eigen::MatrixXd& d_hidden,
                   LstmWeights& grad, Eigen::MatrixXd& d_inputs) {
  const Eigen::Index h = w.hidden();
  const Eigen::Index T = trace.inputs.cols();
  d_inputs.setZero(trace.inputs.rows(), T);

  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd dz(4 * h);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(h);
  for (Eigen::Index step = T - 1; step >= 0; --step) {
    const Eigen::Index pos = trace.reversed ? T - 1 - step : step;
    const Eigen::Index prev_pos = trace.reversed ? pos + 1 : pos - 1;
    const auto gates = trace.gates.col(step);
    const auto c = trace.cells.col(step);
    const Eigen::VectorXd c_prev = step > 0 ? Eigen::VectorXd(trace.cells.col(step - 1)) : zero;
    const Eigen::VectorXd h_prev =
        step > 0 ? Eigen::VectorXd(trace.hidden.col(prev_pos)) : zero;

    const Eigen::VectorXd dh = d_hidden.col(pos) + dh_next;
    const Eigen::ArrayXd tanh_c = c.array().tanh();
    const auto i = gates.segment(0, h).array();
    const auto f = gates.segment(h, h).array();
    const auto g = gates.segment(2 * h, h).array();
    const auto o = gates.segment(3 * h, h).array();

    const Eigen::ArrayXd dc = dh.array() * o * (1.0 - tanh_c.square()) + dc_next.array();
    dz.segment(0, h) = (dc * g * i * (1.0 - i)).matrix();
    dz.segment(h, h) = (dc * c_prev.array() * f * (1.0 - f)).matrix();
    dz.segment(2 * h, h) = (dc * i * (1.0 - g.square())).matrix();
    dz.segment(3 * h, h) = (dh.array() * tanh_c * o * (1.0 - o)).matrix();

    grad.input.noalias() += dz * trace.inputs.col(pos).transpose();
    grad.recurrent.noalias() += dz * h_prev.transpose();
    grad.bias += dz;
    d_inputs.col(pos).noalias() = w.input.transpose() * dz;
    dh_next.noalias() = w.recurrent.transpose() * dz;
    dc_next = (dc * f).matrix();
  }
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, Rng& rng, double scale) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-scale, scale);
  }
}

}  // namespace ntrf
