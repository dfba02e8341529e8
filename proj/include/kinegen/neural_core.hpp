#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "kinegen/rng.hpp"

namespace kinegen::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstVectorMap = Eigen::Map<const Vector>;
using VectorMap = Eigen::Map<Vector>;

/// A named, shaped block of parameters. Matrices are stored row-major as (rows, cols).
struct ParamArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;

    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    ConstMatrixMap matrix() const;
    MatrixMap matrix();
    ConstVectorMap vector() const;
    VectorMap vector();

    bool operator==(const ParamArray&) const = default;
};

/// Ordered collection of parameter arrays; iteration follows insertion order.
class ParamSet {
public:
    ParamArray& add(std::string name, std::vector<std::size_t> shape, double fill = 0.0);

    bool contains(std::string_view name) const;
    ParamArray& at(std::string_view name);
    const ParamArray& at(std::string_view name) const;

    std::span<ParamArray> arrays() { return arrays_; }
    std::span<const ParamArray> arrays() const { return arrays_; }
    std::size_t size() const { return arrays_.size(); }
    std::size_t value_count() const;

    ParamSet zeros_like() const;
    void set_zero();
    void fill(double v);
    bool same_layout(const ParamSet& other) const;
    /// Throws ShapeError naming the first array that differs from `other`.
    void require_same_layout(const ParamSet& other, std::string_view context) const;
    /// Throws NumericalError naming the first non-finite array.
    void require_finite() const;
    /// FNV-1a over names, shapes and the raw value bytes. Used to assert parameters were left untouched.
    std::uint64_t checksum() const;

    bool operator==(const ParamSet& other) const { return arrays_ == other.arrays_; }

private:
    std::vector<ParamArray> arrays_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

enum class Activation { Linear, Sigmoid, Tanh };

Matrix activate(const Matrix& z, Activation act);
/// Multiplies dy by the activation derivative expressed through the activated output y.
Matrix activation_backward(const Matrix& y, const Matrix& dy, Activation act);

/// Fully connected layer `act(W x + b)`; arrays `<prefix>.W` (out, in) and `<prefix>.b` (out).
struct DenseLayer {
    std::string prefix;
    std::size_t input = 0;
    std::size_t output = 0;
    Activation activation = Activation::Linear;

    std::string weight_name() const { return prefix + ".W"; }
    std::string bias_name() const { return prefix + ".b"; }

    void declare(ParamSet& params) const;
    /// U[-k, k], k = 1/sqrt(input), for weights and biases.
    void initialize(ParamSet& params, Rng& rng) const;
    void check(const ParamSet& params) const;

    /// Columns of x are independent inputs.
    Matrix forward(const ParamSet& params, const Matrix& x) const;
    /// Accumulates into grads and returns dL/dx. `y` is the activated output of forward().
    Matrix backward(const ParamSet& params, const Matrix& x, const Matrix& y, const Matrix& dy, ParamSet& grads) const;
};

Vector dense(const ParamSet& params, const DenseLayer& layer, const Vector& x);

struct RecurrentState {
    Vector h;
    Vector c;
};

/// Activations kept for backpropagation through time.
struct LstmCache {
    std::vector<Matrix> x;      // T entries, input x batch
    std::vector<Matrix> h;      // T+1 entries, h[0] is the initial state
    std::vector<Matrix> c;      // T+1 entries
    std::vector<Matrix> gates;  // T entries, 4H x batch, post-activation (i, f, g, o)
    std::vector<Matrix> tanh_c; // T entries
};

/// Long short-term memory cell with gate order (input, forget, candidate, output).
/// Arrays: `<prefix>.W` (4H, in), `<prefix>.U` (4H, H), `<prefix>.b` (4H).
struct LstmLayer {
    std::string prefix;
    std::size_t input = 0;
    std::size_t hidden = 0;

    std::string input_weight_name() const { return prefix + ".W"; }
    std::string recurrent_weight_name() const { return prefix + ".U"; }
    std::string bias_name() const { return prefix + ".b"; }

    void declare(ParamSet& params) const;
    /// U[-k, k] with k = 1/sqrt(input + hidden); forget-gate bias set to 1.
    void initialize(ParamSet& params, Rng& rng) const;
    void check(const ParamSet& params) const;

    /// Runs the cell over xs (each input x batch) from a zero state and returns the hidden states
    /// h_1..h_T. When cache is non-null it receives everything backward() needs.
    std::vector<Matrix> forward(const ParamSet& params, const std::vector<Matrix>& xs, LstmCache* cache) const;
    /// dh[t] is the loss gradient flowing into h_{t+1} from outside the recurrence (may be empty
    /// matrices for steps with no external gradient). Returns dL/dx per step.
    std::vector<Matrix> backward(const ParamSet& params, const LstmCache& cache, const std::vector<Matrix>& dh,
                                 ParamSet& grads) const;
};

RecurrentState lstm_step(const ParamSet& params, const LstmLayer& layer, const Vector& x, const RecurrentState& state);

inline constexpr double kProbabilityClamp = 1e-7;

/// Binary cross-entropy with the probability clamped to [1e-7, 1 - 1e-7].
double bce(double p, double target);
/// d bce / d p of the clamped loss (zero where the clamp is active).
double bce_grad(double p, double target);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ParamSet m;
    ParamSet v;
    std::uint64_t step = 0;

    static AdamState for_params(const ParamSet& params);
};

/// Bias-corrected adaptive-moment update in place.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamHyper& hyper);

/// Returns the loss; when grads is non-null fills it (same layout as params, overwritten) with dL/dparams.
using LossFn = std::function<double(const ParamSet& params, ParamSet* grads)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_array;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Central finite differences over every coordinate. The relative error per coordinate is
/// |a - n| / max(|a|, |n|, floor); the floor keeps coordinates whose true gradient is ~0
/// from dominating through round-off.
GradCheckResult grad_check(const LossFn& loss_fn, const ParamSet& params, double eps = 1e-5, double floor = 1e-7);

/// Splits a (rows x (T*batch)) matrix laid out step-major into T blocks of rows x batch.
std::vector<Matrix> split_steps(const Matrix& wide, std::size_t steps);
Matrix join_steps(const std::vector<Matrix>& steps);

}  // namespace kinegen::nn
