#include "kinegen/neural_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "kinegen/errors.hpp"

namespace kinegen::nn {

namespace {

std::string shape_string(const std::vector<std::size_t>& shape)
{
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

void require_shape(const ParamSet& params, const std::string& name, const std::vector<std::size_t>& shape)
{
    if (!params.contains(name))
        throw ShapeError("missing parameter '" + name + "'");
    const auto& a = params.at(name);
    if (a.shape != shape)
        throw ShapeError("parameter '" + name + "' has shape " + shape_string(a.shape) + ", expected " +
                         shape_string(shape));
}

void fill_uniform(ParamArray& a, double k, Rng& rng)
{
    std::uniform_real_distribution<double> u(-k, k);
    for (auto& v : a.values)
        v = u(rng);
}

Matrix sigmoid(const Matrix& z)
{
    return (1.0 + (-z.array()).exp()).inverse().matrix();
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamArray / ParamSet

ConstMatrixMap ParamArray::matrix() const
{
    return ConstMatrixMap(values.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

MatrixMap ParamArray::matrix()
{
    return MatrixMap(values.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

ConstVectorMap ParamArray::vector() const
{
    return ConstVectorMap(values.data(), static_cast<Eigen::Index>(values.size()));
}

VectorMap ParamArray::vector()
{
    return VectorMap(values.data(), static_cast<Eigen::Index>(values.size()));
}

ParamArray& ParamSet::add(std::string name, std::vector<std::size_t> shape, double fill_value)
{
    if (index_.count(name))
        throw ShapeError("duplicate parameter name '" + name + "'");
    const auto n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    index_.emplace(name, arrays_.size());
    arrays_.push_back(ParamArray{std::move(name), std::move(shape), std::vector<double>(n, fill_value)});
    return arrays_.back();
}

bool ParamSet::contains(std::string_view name) const
{
    return index_.find(name) != index_.end();
}

ParamArray& ParamSet::at(std::string_view name)
{
    auto it = index_.find(name);
    if (it == index_.end())
        throw ShapeError("missing parameter '" + std::string(name) + "'");
    return arrays_[it->second];
}

const ParamArray& ParamSet::at(std::string_view name) const
{
    auto it = index_.find(name);
    if (it == index_.end())
        throw ShapeError("missing parameter '" + std::string(name) + "'");
    return arrays_[it->second];
}

std::size_t ParamSet::value_count() const
{
    std::size_t n = 0;
    for (const auto& a : arrays_)
        n += a.values.size();
    return n;
}

ParamSet ParamSet::zeros_like() const
{
    ParamSet out;
    for (const auto& a : arrays_)
        out.add(a.name, a.shape, 0.0);
    return out;
}

void ParamSet::set_zero()
{
    fill(0.0);
}

void ParamSet::fill(double v)
{
    for (auto& a : arrays_)
        std::fill(a.values.begin(), a.values.end(), v);
}

bool ParamSet::same_layout(const ParamSet& other) const
{
    if (arrays_.size() != other.arrays_.size())
        return false;
    for (std::size_t i = 0; i < arrays_.size(); ++i) {
        if (arrays_[i].name != other.arrays_[i].name || arrays_[i].shape != other.arrays_[i].shape)
            return false;
    }
    return true;
}

void ParamSet::require_same_layout(const ParamSet& other, std::string_view context) const
{
    if (arrays_.size() != other.arrays_.size())
        throw ShapeError(std::string(context) + ": parameter count " + std::to_string(arrays_.size()) + " vs " +
                         std::to_string(other.arrays_.size()));
    for (std::size_t i = 0; i < arrays_.size(); ++i) {
        const auto& a = arrays_[i];
        const auto& b = other.arrays_[i];
        if (a.name != b.name || a.shape != b.shape)
            throw ShapeError(std::string(context) + ": '" + a.name + "' " + shape_string(a.shape) +
                             " does not align with '" + b.name + "' " + shape_string(b.shape));
    }
}

void ParamSet::require_finite() const
{
    for (const auto& a : arrays_) {
        for (double v : a.values) {
            if (!std::isfinite(v))
                throw NumericalError("parameter '" + a.name + "' contains a non-finite value");
        }
    }
}

std::uint64_t ParamSet::checksum() const
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& a : arrays_) {
        mix(a.name.data(), a.name.size());
        mix(a.shape.data(), a.shape.size() * sizeof(std::size_t));
        mix(a.values.data(), a.values.size() * sizeof(double));
    }
    return h;
}

// ---------------------------------------------------------------------------
// Activations

Matrix activate(const Matrix& z, Activation act)
{
    switch (act) {
    case Activation::Linear:
        return z;
    case Activation::Sigmoid:
        return sigmoid(z);
    case Activation::Tanh:
        return z.array().tanh().matrix();
    }
    return z;
}

Matrix activation_backward(const Matrix& y, const Matrix& dy, Activation act)
{
    switch (act) {
    case Activation::Linear:
        return dy;
    case Activation::Sigmoid:
        return (dy.array() * y.array() * (1.0 - y.array())).matrix();
    case Activation::Tanh:
        return (dy.array() * (1.0 - y.array().square())).matrix();
    }
    return dy;
}

// ---------------------------------------------------------------------------
// Dense

void DenseLayer::declare(ParamSet& params) const
{
    params.add(weight_name(), {output, input});
    params.add(bias_name(), {output});
}

void DenseLayer::initialize(ParamSet& params, Rng& rng) const
{
    const double k = 1.0 / std::sqrt(static_cast<double>(input));
    fill_uniform(params.at(weight_name()), k, rng);
    fill_uniform(params.at(bias_name()), k, rng);
}

void DenseLayer::check(const ParamSet& params) const
{
    require_shape(params, weight_name(), {output, input});
    require_shape(params, bias_name(), {output});
}

Matrix DenseLayer::forward(const ParamSet& params, const Matrix& x) const
{
    if (static_cast<std::size_t>(x.rows()) != input)
        throw ShapeError(prefix + ": input has " + std::to_string(x.rows()) + " rows, weight '" + weight_name() +
                         "' expects " + std::to_string(input));
    Matrix z = params.at(weight_name()).matrix() * x;
    z.colwise() += params.at(bias_name()).vector();
    return activate(z, activation);
}

Matrix DenseLayer::backward(const ParamSet& params, const Matrix& x, const Matrix& y, const Matrix& dy,
                            ParamSet& grads) const
{
    const Matrix dz = activation_backward(y, dy, activation);
    grads.at(weight_name()).matrix().noalias() += dz * x.transpose();
    grads.at(bias_name()).vector() += dz.rowwise().sum();
    return params.at(weight_name()).matrix().transpose() * dz;
}

Vector dense(const ParamSet& params, const DenseLayer& layer, const Vector& x)
{
    layer.check(params);
    return layer.forward(params, x);
}

// ---------------------------------------------------------------------------
// LSTM

void LstmLayer::declare(ParamSet& params) const
{
    params.add(input_weight_name(), {4 * hidden, input});
    params.add(recurrent_weight_name(), {4 * hidden, hidden});
    params.add(bias_name(), {4 * hidden});
}

void LstmLayer::initialize(ParamSet& params, Rng& rng) const
{
    const double k = 1.0 / std::sqrt(static_cast<double>(input + hidden));
    fill_uniform(params.at(input_weight_name()), k, rng);
    fill_uniform(params.at(recurrent_weight_name()), k, rng);
    auto& b = params.at(bias_name());
    fill_uniform(b, k, rng);
    for (std::size_t j = hidden; j < 2 * hidden; ++j)
        b.values[j] = 1.0;
}

void LstmLayer::check(const ParamSet& params) const
{
    require_shape(params, input_weight_name(), {4 * hidden, input});
    require_shape(params, recurrent_weight_name(), {4 * hidden, hidden});
    require_shape(params, bias_name(), {4 * hidden});
}

std::vector<Matrix> LstmLayer::forward(const ParamSet& params, const std::vector<Matrix>& xs, LstmCache* cache) const
{
    const auto H = static_cast<Eigen::Index>(hidden);
    const auto steps = xs.size();
    const Eigen::Index batch = steps ? xs.front().cols() : 0;
    const auto W = params.at(input_weight_name()).matrix();
    const auto U = params.at(recurrent_weight_name()).matrix();
    const auto b = params.at(bias_name()).vector();

    Matrix h = Matrix::Zero(H, batch);
    Matrix c = Matrix::Zero(H, batch);
    if (cache) {
        cache->x = xs;
        cache->h.assign(1, h);
        cache->c.assign(1, c);
        cache->gates.clear();
        cache->tanh_c.clear();
        cache->h.reserve(steps + 1);
        cache->c.reserve(steps + 1);
        cache->gates.reserve(steps);
        cache->tanh_c.reserve(steps);
    }

    std::vector<Matrix> out;
    out.reserve(steps);
    Matrix z(4 * H, batch);
    for (std::size_t t = 0; t < steps; ++t) {
        const auto& x = xs[t];
        if (static_cast<std::size_t>(x.rows()) != input || x.cols() != batch)
            throw ShapeError(prefix + ": step " + std::to_string(t) + " input is " + std::to_string(x.rows()) + "x" +
                             std::to_string(x.cols()) + ", weight '" + input_weight_name() + "' expects " +
                             std::to_string(input) + " rows");
        z.noalias() = W * x;
        z.noalias() += U * h;
        z.colwise() += b;
        z.topRows(2 * H) = sigmoid(z.topRows(2 * H));
        z.middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh().matrix();
        z.bottomRows(H) = sigmoid(z.bottomRows(H));

        c = (z.middleRows(H, H).array() * c.array() + z.topRows(H).array() * z.middleRows(2 * H, H).array()).matrix();
        Matrix tc = c.array().tanh().matrix();
        h = (z.bottomRows(H).array() * tc.array()).matrix();
        out.push_back(h);
        if (cache) {
            cache->h.push_back(h);
            cache->c.push_back(c);
            cache->gates.push_back(z);
            cache->tanh_c.push_back(std::move(tc));
        }
    }
    return out;
}

std::vector<Matrix> LstmLayer::backward(const ParamSet& params, const LstmCache& cache, const std::vector<Matrix>& dh,
                                        ParamSet& grads) const
{
    const auto H = static_cast<Eigen::Index>(hidden);
    const auto steps = cache.gates.size();
    const Eigen::Index batch = steps ? cache.gates.front().cols() : 0;
    const auto W = params.at(input_weight_name()).matrix();
    const auto U = params.at(recurrent_weight_name()).matrix();
    auto dW = grads.at(input_weight_name()).matrix();
    auto dU = grads.at(recurrent_weight_name()).matrix();
    auto db = grads.at(bias_name()).vector();

    std::vector<Matrix> dx(steps);
    Matrix dh_next = Matrix::Zero(H, batch);
    Matrix dc_next = Matrix::Zero(H, batch);
    Matrix dz(4 * H, batch);
    for (std::size_t ti = steps; ti-- > 0;) {
        const auto& g = cache.gates[ti];
        const auto& tc = cache.tanh_c[ti];
        Matrix dh_t = dh_next;
        if (ti < dh.size() && dh[ti].size() > 0)
            dh_t += dh[ti];

        const auto i_g = g.topRows(H).array();
        const auto f_g = g.middleRows(H, H).array();
        const auto c_g = g.middleRows(2 * H, H).array();
        const auto o_g = g.bottomRows(H).array();

        Matrix dc = (dc_next.array() + dh_t.array() * o_g * (1.0 - tc.array().square())).matrix();
        dz.topRows(H) = (dc.array() * c_g * i_g * (1.0 - i_g)).matrix();
        dz.middleRows(H, H) = (dc.array() * cache.c[ti].array() * f_g * (1.0 - f_g)).matrix();
        dz.middleRows(2 * H, H) = (dc.array() * i_g * (1.0 - c_g.square())).matrix();
        dz.bottomRows(H) = (dh_t.array() * tc.array() * o_g * (1.0 - o_g)).matrix();
        dc_next = (dc.array() * f_g).matrix();

        dW.noalias() += dz * cache.x[ti].transpose();
        dU.noalias() += dz * cache.h[ti].transpose();
        db += dz.rowwise().sum();
        dx[ti].noalias() = W.transpose() * dz;
        dh_next.noalias() = U.transpose() * dz;
    }
    return dx;
}

RecurrentState lstm_step(const ParamSet& params, const LstmLayer& layer, const Vector& x, const RecurrentState& state)
{
    layer.check(params);
    const auto H = static_cast<Eigen::Index>(layer.hidden);
    if (static_cast<std::size_t>(x.size()) != layer.input)
        throw ShapeError(layer.prefix + ": input length " + std::to_string(x.size()) + " does not match '" +
                         layer.input_weight_name() + "' width " + std::to_string(layer.input));
    if (state.h.size() != H)
        throw ShapeError(layer.prefix + ": hidden state length " + std::to_string(state.h.size()) +
                         " does not match '" + layer.recurrent_weight_name() + "' width " + std::to_string(H));
    if (state.c.size() != H)
        throw ShapeError(layer.prefix + ": cell state length " + std::to_string(state.c.size()) +
                         " does not match hidden size " + std::to_string(H));

    const auto W = params.at(layer.input_weight_name()).matrix();
    const auto U = params.at(layer.recurrent_weight_name()).matrix();
    const auto b = params.at(layer.bias_name()).vector();
    Vector z = W * x + U * state.h + b;
    const Vector i = sigmoid(z.head(H));
    const Vector f = sigmoid(z.segment(H, H));
    const Vector g = z.segment(2 * H, H).array().tanh().matrix();
    const Vector o = sigmoid(z.tail(H));
    RecurrentState next;
    next.c = (f.array() * state.c.array() + i.array() * g.array()).matrix();
    next.h = (o.array() * next.c.array().tanh()).matrix();
    return next;
}

// ---------------------------------------------------------------------------
// Losses

double bce(double p, double target)
{
    const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
}

double bce_grad(double p, double target)
{
    if (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp)
        return 0.0;
    return -target / p + (1.0 - target) / (1.0 - p);
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::for_params(const ParamSet& params)
{
    return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamHyper& hyper)
{
    params.require_same_layout(grads, "adam_step gradients");
    params.require_same_layout(state.m, "adam_step first moment");
    params.require_same_layout(state.v, "adam_step second moment");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    auto p_arrays = params.arrays();
    auto g_arrays = grads.arrays();
    auto m_arrays = state.m.arrays();
    auto v_arrays = state.v.arrays();
    for (std::size_t a = 0; a < p_arrays.size(); ++a) {
        auto& p = p_arrays[a].values;
        const auto& g = g_arrays[a].values;
        auto& m = m_arrays[a].values;
        auto& v = v_arrays[a].values;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult grad_check(const LossFn& loss_fn, const ParamSet& params, double eps, double floor)
{
    ParamSet analytic = params.zeros_like();
    loss_fn(params, &analytic);

    GradCheckResult result;
    ParamSet probe = params;
    auto probe_arrays = probe.arrays();
    for (std::size_t a = 0; a < probe_arrays.size(); ++a) {
        auto& values = probe_arrays[a].values;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = loss_fn(probe, nullptr);
            values[i] = saved - eps;
            const double down = loss_fn(probe, nullptr);
            values[i] = saved;

            const double numeric = (up - down) / (2.0 * eps);
            const double an = analytic.arrays()[a].values[i];
            const double rel = std::abs(an - numeric) / std::max({std::abs(an), std::abs(numeric), floor});
            if (rel > result.max_relative_error || result.worst_array.empty()) {
                result.max_relative_error = std::max(rel, result.max_relative_error);
                result.worst_array = probe_arrays[a].name;
                result.worst_index = i;
                result.analytic = an;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

std::vector<Matrix> split_steps(const Matrix& wide, std::size_t steps)
{
    std::vector<Matrix> out(steps);
    if (steps == 0)
        return out;
    const Eigen::Index batch = wide.cols() / static_cast<Eigen::Index>(steps);
    for (std::size_t t = 0; t < steps; ++t)
        out[t] = wide.middleCols(static_cast<Eigen::Index>(t) * batch, batch);
    return out;
}

Matrix join_steps(const std::vector<Matrix>& steps)
{
    if (steps.empty())
        return Matrix();
    const Eigen::Index rows = steps.front().rows();
    const Eigen::Index batch = steps.front().cols();
    Matrix wide(rows, batch * static_cast<Eigen::Index>(steps.size()));
    for (std::size_t t = 0; t < steps.size(); ++t)
        wide.middleCols(static_cast<Eigen::Index>(t) * batch, batch) = steps[t];
    return wide;
}

}  // namespace kinegen::nn
