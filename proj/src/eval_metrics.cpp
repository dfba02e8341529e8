#include "kinegen/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kinegen/errors.hpp"
#include "kinegen/text.hpp"

namespace kinegen::eval {

using data::CarefulnessClass;
using data::VelocityProfile;

// ---------------------------------------------------------------------------
// PCA

namespace {

using Matrix = std::vector<std::vector<double>>;

std::vector<double> mat_vec(const Matrix& m, const std::vector<double>& v)
{
    std::vector<double> out(m.size(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i)
        out[i] = std::inner_product(m[i].begin(), m[i].end(), v.begin(), 0.0);
    return out;
}

double norm(const std::vector<double>& v)
{
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

double dot(const std::vector<double>& a, const std::vector<double>& b)
{
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void remove_component(std::vector<double>& v, const std::vector<double>& unit)
{
    const double d = dot(v, unit);
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] -= d * unit[i];
}

bool normalize_in_place(std::vector<double>& v)
{
    const double n = norm(v);
    if (!(n > 0.0))
        return false;
    for (auto& x : v)
        x /= n;
    return true;
}

/// Largest-magnitude component positive, so directions are reproducible.
void fix_sign(std::vector<double>& v)
{
    const auto it = std::max_element(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (it != v.end() && *it < 0.0)
        for (auto& x : v)
            x = -x;
}

/// Dominant eigenvector of a symmetric PSD matrix, restricted to the complement of `against`.
/// Returns false when the matrix vanishes on that complement.
bool power_iteration(const Matrix& c, const std::vector<const std::vector<double>*>& against,
                     const PowerIterationOptions& opts, double scale, std::vector<double>& v)
{
    const auto d = c.size();
    auto start_from = [&](std::vector<double> s) {
        for (const auto* u : against)
            remove_component(s, *u);
        return s;
    };
    // Deterministic start e1; fall back to a dense vector if e1 is (numerically) orthogonal to
    // everything the matrix sees.
    std::vector<std::vector<double>> starts;
    std::vector<double> e1(d, 0.0);
    e1[0] = 1.0;
    starts.push_back(e1);
    std::vector<double> dense(d);
    for (std::size_t i = 0; i < d; ++i)
        dense[i] = 1.0 / static_cast<double>(i + 1);
    starts.push_back(dense);
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<double> e(d, 0.0);
        e[i] = 1.0;
        starts.push_back(e);
    }

    const double tiny = 1e-14 * std::max(scale, std::numeric_limits<double>::min());
    for (auto& s : starts) {
        v = start_from(s);
        if (!normalize_in_place(v))
            continue;
        auto w = mat_vec(c, v);
        for (const auto* u : against)
            remove_component(w, *u);
        if (norm(w) <= tiny)
            continue;
        for (std::size_t it = 0; it < opts.max_iterations; ++it) {
            w = mat_vec(c, v);
            for (const auto* u : against)
                remove_component(w, *u);
            if (!normalize_in_place(w))
                break;
            double change = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                change = std::max(change, std::abs(w[i] - v[i]));
            v = w;
            if (change < opts.tolerance)
                break;
        }
        return true;
    }
    // The matrix is zero on the complement: any unit vector orthogonal to `against` will do.
    for (auto& s : starts) {
        v = start_from(s);
        if (normalize_in_place(v))
            return false;
    }
    return false;
}

}  // namespace

Pca2D pca_fit(std::span<const Series> data, const PowerIterationOptions& opts)
{
    if (data.size() < 3)
        throw ArgumentError("PCA needs at least 3 vectors, got " + std::to_string(data.size()));
    const auto d = data.front().size();
    if (d < 2)
        throw ArgumentError("PCA needs vectors of dimension at least 2");
    for (const auto& x : data) {
        if (x.size() != d)
            throw ShapeError("PCA input vectors must share one dimension");
    }

    Pca2D out;
    out.mean.assign(d, 0.0);
    for (const auto& x : data)
        for (std::size_t i = 0; i < d; ++i)
            out.mean[i] += x[i];
    for (auto& m : out.mean)
        m /= static_cast<double>(data.size());

    Matrix cov(d, std::vector<double>(d, 0.0));
    std::vector<double> centred(d);
    for (const auto& x : data) {
        for (std::size_t i = 0; i < d; ++i)
            centred[i] = x[i] - out.mean[i];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j)
                cov[i][j] += centred[i] * centred[j];
    }
    const double denom = static_cast<double>(data.size() - 1);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
        out.total_variance += cov[i][i];
    }

    std::vector<double> v1, v2;
    const bool has_first = power_iteration(cov, {}, opts, out.total_variance, v1);
    double lambda1 = has_first ? std::max(0.0, dot(v1, mat_vec(cov, v1))) : 0.0;
    // Deflation: C - lambda1 v1 v1^T, with v2 kept orthogonal to v1 at every step.
    Matrix deflated = cov;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            deflated[i][j] -= lambda1 * v1[i] * v1[j];
    const bool has_second = power_iteration(deflated, {&v1}, opts, out.total_variance, v2);
    remove_component(v2, v1);
    normalize_in_place(v2);
    double lambda2 = has_second ? std::max(0.0, dot(v2, mat_vec(cov, v2))) : 0.0;

    fix_sign(v1);
    fix_sign(v2);
    if (lambda2 > lambda1) {
        std::swap(v1, v2);
        std::swap(lambda1, lambda2);
    }
    out.directions = {std::move(v1), std::move(v2)};
    out.explained_variance = {lambda1, lambda2};
    return out;
}

std::array<double, 2> pca_project(const Pca2D& pca, std::span<const double> point)
{
    if (point.size() != pca.mean.size())
        throw ShapeError("PCA projection expects dimension " + std::to_string(pca.mean.size()) + ", got " +
                         std::to_string(point.size()));
    std::array<double, 2> out{0.0, 0.0};
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t i = 0; i < point.size(); ++i)
            out[k] += (point[i] - pca.mean[i]) * pca.directions[k][i];
    return out;
}

// ---------------------------------------------------------------------------
// Nearest neighbours

namespace {

double squared_distance(const Series& a, const Series& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

std::vector<double> nearest_neighbor_distances(std::span<const Series> synth, std::span<const Series> real)
{
    if (real.empty())
        throw ArgumentError("nearest-neighbour search needs at least one real sample");
    const auto n = real.front().size();
    for (const auto& r : real)
        if (r.size() != n)
            throw ShapeError("real samples have differing lengths");
    std::vector<double> out;
    out.reserve(synth.size());
    for (const auto& s : synth) {
        if (s.size() != n)
            throw ShapeError("synthetic sample length " + std::to_string(s.size()) + " differs from real length " +
                             std::to_string(n));
        double best = std::numeric_limits<double>::infinity();
        for (const auto& r : real)
            best = std::min(best, squared_distance(s, r));
        out.push_back(std::sqrt(best));
    }
    return out;
}

std::vector<double> nearest_neighbor_distances_within(std::span<const Series> samples)
{
    if (samples.size() < 2)
        throw ArgumentError("leave-one-out distances need at least 2 samples");
    std::vector<double> best(samples.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].size() != samples.front().size())
            throw ShapeError("samples have differing lengths");
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            const double d = squared_distance(samples[i], samples[j]);
            best[i] = std::min(best[i], d);
            best[j] = std::min(best[j], d);
        }
    }
    for (auto& b : best)
        b = std::sqrt(b);
    return best;
}

// ---------------------------------------------------------------------------
// Label consistency

std::array<double, 2> consistency_features(const VelocityProfile& p)
{
    double integral = 0.0;
    for (std::size_t k = 1; k < p.samples.size(); ++k)
        integral += 0.5 * (p.samples[k - 1] + p.samples[k]) * p.dt;
    return {p.peak(), integral};
}

double LogisticModel::probability(const std::array<double, 2>& f) const
{
    double z = bias;
    for (std::size_t k = 0; k < 2; ++k)
        z += weights[k] * (f[k] - feature_mean[k]) / feature_scale[k];
    return 1.0 / (1.0 + std::exp(-z));
}

CarefulnessClass LogisticModel::predict(const std::array<double, 2>& f) const
{
    return probability(f) >= 0.5 ? CarefulnessClass::Careful : CarefulnessClass::NotCareful;
}

namespace {

void require_both_classes(std::span<const VelocityProfile> set, const char* what)
{
    bool seen[2] = {false, false};
    for (const auto& p : set) {
        if (!p.label)
            throw ArgumentError(std::string(what) + " profiles must be labelled");
        seen[static_cast<int>(*p.label)] = true;
    }
    if (!seen[0] || !seen[1])
        throw ArgumentError(std::string(what) + " set must contain both carefulness classes");
}

double accuracy_of(const LogisticModel& m, std::span<const VelocityProfile> set)
{
    std::size_t hits = 0;
    for (const auto& p : set)
        hits += m.predict(consistency_features(p)) == *p.label ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(set.size());
}

}  // namespace

LogisticModel fit_logistic(std::span<const VelocityProfile> labelled, const LogisticOptions& opts)
{
    require_both_classes(labelled, "classifier training");
    const auto n = labelled.size();
    std::vector<std::array<double, 2>> features;
    std::vector<double> targets;
    features.reserve(n);
    for (const auto& p : labelled) {
        features.push_back(consistency_features(p));
        targets.push_back(static_cast<double>(*p.label));
    }

    LogisticModel m;
    for (std::size_t k = 0; k < 2; ++k) {
        double mean = 0.0;
        for (const auto& f : features)
            mean += f[k];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& f : features)
            var += (f[k] - mean) * (f[k] - mean);
        const double sd = std::sqrt(var / static_cast<double>(n));
        m.feature_mean[k] = mean;
        m.feature_scale[k] = sd > 0.0 ? sd : 1.0;
    }

    std::vector<std::array<double, 2>> z(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 2; ++k)
            z[i][k] = (features[i][k] - m.feature_mean[k]) / m.feature_scale[k];

    for (std::size_t it = 0; it < opts.iterations; ++it) {
        std::array<double, 2> gw{0.0, 0.0};
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s = m.bias + m.weights[0] * z[i][0] + m.weights[1] * z[i][1];
            const double err = 1.0 / (1.0 + std::exp(-s)) - targets[i];
            gw[0] += err * z[i][0];
            gw[1] += err * z[i][1];
            gb += err;
        }
        const double scale = opts.learning_rate / static_cast<double>(n);
        m.weights[0] -= scale * gw[0];
        m.weights[1] -= scale * gw[1];
        m.bias -= scale * gb;
    }
    return m;
}

ConsistencyResult label_consistency(std::span<const VelocityProfile> real, std::span<const VelocityProfile> synth,
                                    const LogisticOptions& opts)
{
    require_both_classes(real, "real");
    require_both_classes(synth, "synthetic");
    ConsistencyResult out;
    out.model = fit_logistic(real, opts);
    out.train_accuracy = accuracy_of(out.model, real);
    out.accuracy = accuracy_of(out.model, synth);
    return out;
}

// ---------------------------------------------------------------------------
// Correlation and summaries

double pearson(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw ShapeError("pearson needs equal-length series (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    if (a.size() < 2)
        throw ArgumentError("pearson needs at least 2 samples");
    auto constant = [](std::span<const double> x) {
        const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
        return *lo == *hi;
    };
    if (constant(a) || constant(b))
        throw UndefinedCorrelationError("correlation is undefined for a constant series");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (!(saa > 0.0) || !(sbb > 0.0))
        throw UndefinedCorrelationError("correlation is undefined for a constant series");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double quantile(std::vector<double> values, double q)
{
    if (values.empty())
        throw ArgumentError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Summary summarize(std::span<const double> values)
{
    if (values.empty())
        throw ArgumentError("cannot summarize an empty sample");
    Summary s;
    s.count = values.size();
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values)
        var += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(var / n);
    std::vector<double> copy(values.begin(), values.end());
    s.median = quantile(copy, 0.5);
    s.q1 = quantile(copy, 0.25);
    s.q3 = quantile(std::move(copy), 0.75);
    return s;
}

std::map<std::string, ClassStats> class_stats(std::span<const VelocityProfile> profiles)
{
    if (profiles.empty())
        throw ArgumentError("class_stats needs at least one profile");
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& p : profiles) {
        const std::string key = p.label ? std::string(data::to_string(*p.label)) : std::string("Unlabeled");
        groups[key].first.push_back(p.peak());
        groups[key].second.push_back(p.duration());
    }
    std::map<std::string, ClassStats> out;
    for (const auto& [key, g] : groups)
        out[key] = ClassStats{summarize(g.first), summarize(g.second)};
    return out;
}

// ---------------------------------------------------------------------------
// Report

FidelityReport fidelity_report(std::span<const VelocityProfile> real, std::span<const VelocityProfile> synth,
                               std::size_t n, const data::NormStats& stats)
{
    if (real.empty() || synth.empty())
        throw ArgumentError("fidelity report needs non-empty real and synthetic sets");
    auto project = [&](std::span<const VelocityProfile> set) {
        std::vector<Series> out;
        out.reserve(set.size());
        for (const auto& p : set)
            out.push_back(data::network_input(p, n, stats));
        return out;
    };
    const auto real_x = project(real);
    const auto synth_x = project(synth);

    FidelityReport r;
    r.real_stats = class_stats(real);
    r.synth_stats = class_stats(synth);
    r.nn_distances = nearest_neighbor_distances(synth_x, real_x);
    for (double q : kReportQuantiles)
        r.nn_quantiles.push_back(quantile(r.nn_distances, q));
    if (real_x.size() >= 2) {
        r.real_nn_p10 = quantile(nearest_neighbor_distances_within(real_x), 0.10);
        const auto close = std::count_if(r.nn_distances.begin(), r.nn_distances.end(),
                                         [&](double d) { return d < r.real_nn_p10; });
        r.fraction_within_real_p10 = static_cast<double>(close) / static_cast<double>(r.nn_distances.size());
    }
    r.exact_duplicates = static_cast<std::size_t>(
        std::count(r.nn_distances.begin(), r.nn_distances.end(), 0.0));
    r.consistency = label_consistency(real, synth);
    r.pca = pca_fit(real_x);
    auto label_of = [](const VelocityProfile& p) {
        return p.label ? std::string(data::to_string(*p.label)) : std::string();
    };
    for (std::size_t i = 0; i < real_x.size(); ++i) {
        const auto xy = pca_project(r.pca, real_x[i]);
        r.pca_points.push_back({xy[0], xy[1], "real", label_of(real[i])});
    }
    for (std::size_t i = 0; i < synth_x.size(); ++i) {
        const auto xy = pca_project(r.pca, synth_x[i]);
        r.pca_points.push_back({xy[0], xy[1], "synth", label_of(synth[i])});
    }
    return r;
}

namespace {

nlohmann::json summary_json(const Summary& s)
{
    return {{"count", s.count}, {"mean", s.mean}, {"median", s.median}, {"sd", s.sd}, {"q1", s.q1}, {"q3", s.q3}};
}

nlohmann::json stats_json(const std::map<std::string, ClassStats>& m)
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m)
        j[k] = {{"peak", summary_json(v.peak)}, {"duration", summary_json(v.duration)}};
    return j;
}

}  // namespace

nlohmann::json to_json(const FidelityReport& r)
{
    nlohmann::json j;
    j["real_class_stats"] = stats_json(r.real_stats);
    j["synthetic_class_stats"] = stats_json(r.synth_stats);
    nlohmann::json q = nlohmann::json::object();
    for (std::size_t i = 0; i < r.nn_quantiles.size(); ++i)
        q[text::format_double(kReportQuantiles[i])] = r.nn_quantiles[i];
    j["nearest_neighbor"] = {{"quantiles", q},
                             {"min", r.nn_distances.empty() ? 0.0 : *std::min_element(r.nn_distances.begin(),
                                                                                      r.nn_distances.end())},
                             {"real_leave_one_out_p10", r.real_nn_p10},
                             {"fraction_within_real_p10", r.fraction_within_real_p10},
                             {"exact_duplicates", r.exact_duplicates}};
    j["label_consistency"] = {{"accuracy", r.consistency.accuracy},
                              {"classifier_train_accuracy", r.consistency.train_accuracy},
                              {"weights", r.consistency.model.weights},
                              {"bias", r.consistency.model.bias},
                              {"feature_mean", r.consistency.model.feature_mean},
                              {"feature_scale", r.consistency.model.feature_scale}};
    j["pca"] = {{"mean", r.pca.mean},
                {"directions", {r.pca.directions[0], r.pca.directions[1]}},
                {"explained_variance", r.pca.explained_variance},
                {"total_variance", r.pca.total_variance}};
    return j;
}

void write_report(const FidelityReport& r, const std::filesystem::path& dir)
{
    using text::format_double;
    text::write_file(dir / "fidelity.json", to_json(r).dump(2) + "\n");

    std::string pca = "x,y,source,label\n";
    for (const auto& p : r.pca_points)
        pca += format_double(p.x) + "," + format_double(p.y) + "," + p.source + "," + p.label + "\n";
    text::write_file(dir / "pca_points.csv", pca);

    std::string nn = "synth_index,distance\n";
    for (std::size_t i = 0; i < r.nn_distances.size(); ++i)
        nn += std::to_string(i) + "," + format_double(r.nn_distances[i]) + "\n";
    text::write_file(dir / "nn_distances.csv", nn);

    std::string cs = "source,class,count,peak_mean,peak_median,peak_sd,duration_mean,duration_median,duration_sd\n";
    auto rows = [&](const char* source, const std::map<std::string, ClassStats>& m) {
        for (const auto& [k, v] : m)
            cs += std::string(source) + "," + k + "," + std::to_string(v.peak.count) + "," + format_double(v.peak.mean) +
                  "," + format_double(v.peak.median) + "," + format_double(v.peak.sd) + "," +
                  format_double(v.duration.mean) + "," + format_double(v.duration.median) + "," +
                  format_double(v.duration.sd) + "\n";
    };
    rows("real", r.real_stats);
    rows("synth", r.synth_stats);
    text::write_file(dir / "class_stats.csv", cs);
}

}  // namespace kinegen::eval
