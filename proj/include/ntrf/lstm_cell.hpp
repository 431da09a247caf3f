#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ntrf/common.hpp"
#include "ntrf/tensor.hpp"

namespace ntrf {

/// One LSTM layer. Gate rows are ordered input, forget, cell, output.
struct LstmWeights {
  Eigen::MatrixXd input;      // 4h x in
  Eigen::MatrixXd recurrent;  // 4h x h
  Eigen::VectorXd bias;       // 4h

  static LstmWeights zeros(Eigen::Index in, Eigen::Index hidden);
  Eigen::Index hidden() const { return recurrent.cols(); }
  Eigen::Index input_size() const { return input.cols(); }

  void append_tensors(const std::string& prefix, std::vector<TensorRef>& out);
  void append_tensors(const std::string& prefix, std::vector<ConstTensorRef>& out) const;
};

/// Activations of one pass over a sequence, stored in processing order
/// (column t is the t-th step taken, which is position T-1-t when reversed).
struct LstmTrace {
  Eigen::MatrixXd inputs;  // in x T, positional order
  Eigen::MatrixXd gates;   // 4h x T, post-activation
  Eigen::MatrixXd cells;   // h x T
  Eigen::MatrixXd hidden;  // h x T, positional order
  bool reversed = false;
};

/// Runs the layer over the columns of `inputs` (right to left if reversed);
/// zero initial state.
void lstm_forward(const LstmWeights& w, const Eigen::MatrixXd& inputs, bool reversed,
                  LstmTrace& trace);

/// Backpropagates `d_hidden` (h x T, positional order) through the pass,
/// accumulating into `grad` and writing the input gradient to `d_inputs`.
void lstm_backward(const LstmWeights& w, const LstmTrace& trace, const Eigen::MatrixXd& d_hidden,
                   LstmWeights& grad, Eigen::MatrixXd& d_inputs);

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, Rng& rng, double scale);

}  // namespace ntrf
