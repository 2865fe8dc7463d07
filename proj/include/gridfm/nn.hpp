#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "gridfm/grid_env.hpp"

namespace gridfm::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Dense layer stored inside a flat parameter vector: weights (out x in,
// column-major) followed by the bias.
struct LinearSlot {
  int in = 0;
  int out = 0;
  std::size_t offset = 0;
  std::size_t size() const {
    return static_cast<std::size_t>(in) * out + out;
  }
  Eigen::Map<const Mat> w(const double* p) const {
    return {p + offset, out, in};
  }
  Eigen::Map<const Vec> b(const double* p) const {
    return {p + offset + static_cast<std::size_t>(in) * out, out};
  }
  Eigen::Map<Mat> w(double* p) const { return {p + offset, out, in}; }
  Eigen::Map<Vec> b(double* p) const {
    return {p + offset + static_cast<std::size_t>(in) * out, out};
  }
};

struct TowerShape {
  bool recurrent = false;
  // Feed-forward: two tanh layers.
  int hidden1 = 64;
  int hidden2 = 64;
  // Recurrent: tanh encoder then a GRU cell.
  int encoder = 64;
  int recurrent_size = 32;
};

// Activations kept by forward() for backward().
struct TowerCache {
  Mat x;
  Mat h1, h2;             // feed-forward
  Mat e;                  // recurrent encoder output, enc x L
  Mat r, z, n, gh_n, hs;  // GRU gates; hs is H x (L + 1), column 0 = h0
};

// A feed-forward MLP (in -> h1 -> h2 -> out, tanh) or a recurrent tower
// (in -> tanh encoder -> GRU -> out). The GRU follows the reset-gate-after-
// matmul convention: n = tanh(W_n e + b_in + r * (U_n h + b_hn)).
class Tower {
 public:
  Tower() = default;
  Tower(int input_dim, int output_dim, TowerShape shape);

  std::size_t num_params() const { return num_params_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  bool recurrent() const { return shape_.recurrent; }
  int hidden_size() const { return shape_.recurrent ? shape_.recurrent_size : 0; }

  // Orthogonal init: hidden layers with gain sqrt(2), output layer with
  // `output_gain`, zero biases.
  void init(double* params, Rng& rng, double output_gain) const;

  // Columns of `x` are samples (feed-forward) or consecutive time steps
  // starting from hidden state `h0` (recurrent). Returns out x L.
  Mat forward(const double* params, const Mat& x, const Vec& h0,
              TowerCache* cache) const;

  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const double* params, const TowerCache& cache, const Mat& dy,
                double* grad) const;

  // Single step; advances `h` in place for recurrent towers.
  Vec step(const double* params, const Vec& x, Vec& h) const;

 private:
  int input_dim_ = 0;
  int output_dim_ = 0;
  TowerShape shape_;
  std::size_t num_params_ = 0;
  // Feed-forward: l1, l2, out. Recurrent: enc, gates_in, gates_hidden, out.
  LinearSlot l1_, l2_, out_;
  LinearSlot enc_, gi_, gh_;
};

// Random matrix with orthonormal rows or columns, scaled by `gain`.
Mat orthogonal(int rows, int cols, double gain, Rng& rng);

}  // namespace gridfm::nn
