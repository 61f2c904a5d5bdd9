#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctxpara/common.hpp"

/// Minimal reverse-mode automatic differentiation over dense matrices.
/// A Var is a node in a dynamically built graph; backward() walks the graph
/// from a scalar root in reverse topological order.
namespace ctxpara::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g) {
        if (grad.size() == 0) grad = g;
        else grad += g;
    }
};

using Var = std::shared_ptr<Node>;

/// While alive, new nodes on this thread record no graph.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

Var constant(Matrix value);
Var parameter(Matrix value);

Var matmul(const Var& a, const Var& b);
/// a * b^T without materializing the transpose.
Var matmul_transposed(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// Adds a 1 x n row to every row of a.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var gelu(const Var& a);
/// Row-wise layer normalization with learned gain and bias rows.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
/// Row-wise softmax with a causal mask (entry (i, j) is excluded when j > i).
Var causal_softmax(const Var& scores);
Var log_softmax_rows(const Var& a);
/// Rows of `table` selected by ids; an embedding lookup.
Var gather_rows(const Var& table, std::span<const int> ids);
/// Rows [first, first + count) of a.
Var take_rows(const Var& a, int first, int count);
Var concat_cols(const std::vector<Var>& parts);
/// Column vector of a(rows[k], cols[k]).
Var pick(const Var& a, std::span<const int> rows, std::span<const int> cols);
/// 1 x 1 sum of a .* weights; used to inject a hand-derived gradient.
Var weighted_sum(const Var& a, const Matrix& weights);
Var sum(const Var& a);

/// Seeds d(root)/d(root) = 1 and propagates. Root must be 1 x 1.
void backward(const Var& root);

/// Named trainable tensor.
struct Parameter {
    std::string name;
    Var var;
};

class Adam {
  public:
    struct Options {
        double learning_rate = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double grad_clip = 1.0;  // global norm; <= 0 disables
    };

    explicit Adam(Options options) : options_(options) {}

    /// Applies one update from the accumulated grads and clears them.
    /// Returns the pre-clip global gradient norm.
    double step(std::vector<Parameter>& params);
    const Options& options() const { return options_; }
    void set_learning_rate(double lr) { options_.learning_rate = lr; }

  private:
    Options options_;
    std::vector<Matrix> m_, v_;
    long t_ = 0;
};

void zero_grad(std::vector<Parameter>& params);

/// Order-sensitive digest of all parameter bytes.
std::uint64_t parameter_hash(const std::vector<Parameter>& params);

/// Flat binary blob: magic, count, then per tensor rows, cols, row-major doubles.
void save_parameters(const std::filesystem::path& path, const std::vector<Parameter>& params);
/// Loads values into tensors of matching shape; throws Error on mismatch.
void load_parameters(const std::filesystem::path& path, std::vector<Parameter>& params);

}  // namespace ctxpara::nn
