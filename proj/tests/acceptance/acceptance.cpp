// One PASS/FAIL line per acceptance criterion, with the measured values.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "kinegen/autoencoder.hpp"
#include "kinegen/cgan.hpp"
#include "kinegen/eval_metrics.hpp"
#include "kinegen/pipeline.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/text.hpp"
#include "kinegen/trajectory.hpp"
#include "../oracles.hpp"
#include "../test_util.hpp"
#include "../tiny_nets.hpp"

using namespace kinegen;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(const std::string& name, bool pass, const std::string& detail)
{
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
    failures += pass ? 0 : 1;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename... Args>
std::string fmt(const char* f, Args... args)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

void gradient_integrity()
{
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t nets = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng dims(seed + 5000);
        const std::size_t input = 1 + dims() % 3, hidden = 1 + dims() % 8, steps = 1 + dims() % 5,
                          batch = 1 + dims() % 3;
        testutil::TinyNet net(input, hidden, steps, batch, seed + 5000);
        const auto r = nn::grad_check([&](const nn::ParamSet& p, nn::ParamSet* g) { return net.loss(p, g); },
                                      net.params);
        worst = std::max(worst, r.max_relative_error);
        ++nets;
    }
    const double secs = seconds_since(t0);
    verdict("gradient integrity", nets >= 100 && worst < 1e-4 && secs < 60.0,
            fmt("%zu networks, max relative error %.3g (< 1e-4), %.1f s (< 60 s)", nets, worst, secs));
}

struct Trained {
    data::ProfileCorpus corpus;
    ae::AutoencoderModel autoencoder;
    gan::GanModel gan;
    std::vector<data::VelocityProfile> synthetic;  // 100 NotCareful then 100 Careful
};

Trained autoencoder_fidelity(const pipeline::RunConfig& cfg)
{
    Trained out;
    out.corpus = data::make_dataset(cfg.corpus, cfg.seed);
    const auto t0 = Clock::now();
    auto result =
        ae::train_autoencoder(out.corpus, cfg.autoencoder, cfg.autoencoder_train, derive_seed(cfg.seed, "ae"));
    const double secs = seconds_since(t0);
    out.autoencoder = std::move(result.model);

    std::vector<std::vector<double>> heldout;
    for (auto i : out.corpus.heldout)
        heldout.push_back(
            data::network_input(out.corpus.profiles[i], cfg.autoencoder.seq_len, out.corpus.normalization));
    const double rmse = ae::reconstruction_error(out.autoencoder, heldout);
    verdict("autoencoder fidelity",
            rmse < 0.05 && cfg.autoencoder_train.epochs <= 300 && secs < 600.0,
            fmt("held-out RMSE %.4f (< 0.05) on %zu profiles, N=%zu E=%zu, %zu epochs (<= 300), %.0f s (< 600 s)",
                rmse, heldout.size(), cfg.autoencoder.seq_len, cfg.autoencoder.latent, cfg.autoencoder_train.epochs,
                secs));
    return out;
}

void conditional_fidelity(const pipeline::RunConfig& cfg, Trained& t)
{
    const auto t0 = Clock::now();
    auto gan_cfg = cfg.gan;
    gan_cfg.seq_len = cfg.autoencoder.seq_len;
    t.gan = gan::train_gan(t.corpus, t.autoencoder, gan_cfg, cfg.gan_train, derive_seed(cfg.seed, "gan")).model;
    for (auto c : {data::CarefulnessClass::NotCareful, data::CarefulnessClass::Careful}) {
        auto batch = gan::synthesize(t.gan, t.autoencoder, c, 100, derive_seed(cfg.seed, "synth"),
                                     t.corpus.normalization);
        t.synthetic.insert(t.synthetic.end(), batch.begin(), batch.end());
    }
    std::vector<data::VelocityProfile> train;
    for (auto i : t.corpus.train)
        train.push_back(t.corpus.profiles[i]);
    const auto consistency = eval::label_consistency(train, t.synthetic);
    const auto stats = eval::class_stats(t.synthetic);
    const double nc_peak = stats.at("NotCareful").peak.median;
    const double c_peak = stats.at("Careful").peak.median;
    const double secs = seconds_since(t0);
    verdict("conditional fidelity",
            consistency.accuracy >= 0.85 && c_peak < nc_peak && cfg.gan_train.epochs <= 500 && secs < 1200.0,
            fmt("label consistency %.3f (>= 0.85) over %zu samples, median peak C %.3f < NC %.3f m/s, %zu epochs "
                "(<= 500), %.0f s (< 1200 s)",
                consistency.accuracy, t.synthetic.size(), c_peak, nc_peak, cfg.gan_train.epochs, secs));
}

void non_copying(const pipeline::RunConfig& cfg, const Trained& t)
{
    std::vector<data::VelocityProfile> train;
    for (auto i : t.corpus.train)
        train.push_back(t.corpus.profiles[i]);
    const auto rep = eval::fidelity_report(train, t.synthetic, cfg.autoencoder.seq_len, t.corpus.normalization);
    verdict("non-copying", rep.fraction_within_real_p10 < 0.05 && rep.exact_duplicates == 0,
            fmt("%.3f of synthetic samples within eps=%.4f of a training sample (< 0.05), %zu exact duplicates "
                "(= 0), nearest distance %.4f",
                rep.fraction_within_real_p10, rep.real_nn_p10, rep.exact_duplicates,
                *std::min_element(rep.nn_distances.begin(), rep.nn_distances.end())));
}

void time_parameterization()
{
    const auto t0 = Clock::now();
    Rng rng(2024);
    std::uniform_real_distribution<double> len(0.2, 0.8);
    double worst_t = 0.0, worst_s = 0.0;
    for (int i = 0; i < 50; ++i) {
        const auto c = rng() % 2 ? data::CarefulnessClass::Careful : data::CarefulnessClass::NotCareful;
        const double length = len(rng);
        const auto p = traj::rescale_profile(data::synth_profile(c, rng, data::SynthConfig{}), length);
        const testutil::FineGrid oracle(p);
        const auto path = traj::make_path(traj::kAllPlanes[i % 3], length);
        for (const auto& w : traj::spatial_waypoints(p, path, 0.01).entries)
            worst_t = std::max(worst_t, std::abs(w.t - oracle.time_at(w.arc)));
        for (const auto& w : traj::temporal_waypoints(p, path, 0.05).entries)
            worst_s = std::max(worst_s, (w.position - path.point_at(oracle.distance_at(w.t))).norm());
    }
    const double secs = seconds_since(t0);
    verdict("time-parameterization", worst_t < 1e-4 && worst_s < 1e-4 && secs < 60.0,
            fmt("50 profiles, spatial timestamp error %.2e s (< 1e-4), temporal position error %.2e m (< 1e-4), "
                "%.1f s (< 60 s)",
                worst_t, worst_s, secs));
}

struct ClassRuns {
    std::vector<double> r, ratio, delay, planned, executed;
};

/// Mirrors `execute`: per_class profiles of each class, every plane, per-combination seeds.
std::map<std::string, ClassRuns> execute_selected(const pipeline::RunConfig& cfg,
                                                  const std::vector<data::VelocityProfile>& profiles,
                                                  const traj::ActuatorPreset& preset, std::size_t reps)
{
    std::map<std::string, ClassRuns> out;
    const auto chosen = pipeline::select_profiles(profiles, 3, derive_seed(cfg.seed, "exec"));
    for (auto id : chosen) {
        for (auto plane : traj::kAllPlanes) {
            const auto route = traj::make_path(plane, preset.length_for(plane));
            const auto planned = traj::rescale_profile(profiles[id], route.length());
            const auto seed = derive_seed(derive_seed(cfg.seed, "exec", id), traj::to_string(plane));
            const auto res = traj::repeat_runs(planned, route, preset, reps, seed);
            auto& bucket = out[std::string(data::to_string(*profiles[id].label))];
            for (const auto& m : res.runs) {
                bucket.r.push_back(m.pearson_r);
                bucket.ratio.push_back(m.peak_executed / m.peak_planned);
                bucket.delay.push_back(m.peak_delay);
                bucket.planned.push_back(m.peak_planned);
                bucket.executed.push_back(m.peak_executed);
            }
        }
    }
    return out;
}

void ideal_execution(const pipeline::RunConfig& cfg, const Trained& t)
{
    const auto& ideal = traj::find_preset(cfg.presets, "ideal");
    const auto runs = execute_selected(cfg, t.synthetic, ideal, 1);
    double min_r = 1.0, worst_dev = 0.0;
    std::size_t count = 0;
    for (const auto& [label, b] : runs) {
        for (std::size_t i = 0; i < b.r.size(); ++i) {
            min_r = std::min(min_r, b.r[i]);
            worst_dev = std::max(worst_dev, std::abs(b.ratio[i] - 1.0));
            ++count;
        }
    }
    verdict("ideal-execution limit", count == 18 && min_r >= 0.999 && worst_dev <= 0.01,
            fmt("%zu profile-plane runs, min Pearson r %.5f (>= 0.999), max peak deviation %.3f%% (<= 1%%)", count,
                min_r, 100.0 * worst_dev));
}

void calibrated_execution(const pipeline::RunConfig& cfg, const Trained& t)
{
    const auto t0 = Clock::now();
    const auto& baxter = traj::find_preset(cfg.presets, "baxter-like");
    auto runs = execute_selected(cfg, t.synthetic, baxter, 10);
    const double secs = seconds_since(t0);
    auto med = [](const std::vector<double>& v) { return eval::quantile(v, 0.5); };
    const auto& nc = runs["NotCareful"];
    const auto& c = runs["Careful"];
    const double c_r = med(c.r), nc_r = med(nc.r);
    const double nc_planned = med(nc.planned), nc_exec = med(nc.executed), nc_delay = med(nc.delay);
    const bool pass = c.r.size() == 90 && nc.r.size() == 90 && c_r >= 0.98 && nc_r >= 0.90 && nc_r <= 0.98 &&
                      nc_exec < nc_planned && nc_delay > 0.0 && secs < 120.0;
    verdict("calibrated execution",
            pass,
            fmt("median r C %.4f (>= 0.98), NC %.4f (in [0.90, 0.98]); NC median peak executed %.3f < planned %.3f "
                "m/s, NC median delay %+.3f s (> 0), C median delay %+.3f s; %zu+%zu runs, %.1f s (< 120 s)",
                c_r, nc_r, nc_exec, nc_planned, nc_delay, med(c.delay), nc.r.size(), c.r.size(), secs));
}

void rescaling_conservation()
{
    Rng rng(1000);
    std::uniform_real_distribution<double> len(0.05, 1.5);
    double worst = 0.0;
    bool durations = true;
    for (int i = 0; i < 1000; ++i) {
        const auto c = i % 2 ? data::CarefulnessClass::Careful : data::CarefulnessClass::NotCareful;
        const auto p = data::synth_profile(c, rng, data::SynthConfig{});
        const double target = len(rng);
        const auto r = traj::rescale_profile(p, target);
        worst = std::max(worst, std::abs(traj::travelled_distance(r) - target) / target);
        durations = durations && r.samples.size() == p.samples.size() && r.dt == p.dt && r.duration() == p.duration();
    }
    verdict("rescaling conservation", worst <= 1e-3 && durations,
            fmt("1000 profiles, max relative integral error %.2e (<= 1e-3), durations bit-identical: %s", worst,
                durations ? "yes" : "no"));
}

int run_cli(const std::string& args)
{
    const std::string cmd = "\"" KINEGEN_CLI_PATH "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism()
{
    testutil::TempDir dir;
    text::write_file(dir.path() / "cfg.json", R"({
  "seed": 7,
  "corpus": {"count_not_careful": 60, "count_careful": 60},
  "autoencoder": {"epochs": 5},
  "gan": {"epochs": 5},
  "synthesize": {"n": 20}
})");
    int rc = 0;
    for (const char* run : {"first", "second"})
        rc |= run_cli("--config \"" + (dir.path() / "cfg.json").string() + "\" --out \"" +
                      (dir.path() / run).string() + "\" report");
    bool same = false;
    std::size_t bytes = 0, rows = 0;
    if (rc == 0) {
        const auto a = text::read_file(dir.path() / "first" / "execution" / "metrics.csv");
        const auto b = text::read_file(dir.path() / "second" / "execution" / "metrics.csv");
        same = a == b;
        bytes = a.size();
        rows = static_cast<std::size_t>(std::count(a.begin(), a.end(), '\n')) - 1;
    }
    verdict("determinism", rc == 0 && same && rows > 0,
            fmt("two full report runs (seed 7, reduced epochs), metrics.csv %zu rows / %zu bytes, byte-identical: %s",
                rows, bytes, same ? "yes" : "no"));
}

}  // namespace

int main()
{
    pipeline::RunConfig cfg;
    cfg.gan_train.epochs = 150;

    gradient_integrity();
    time_parameterization();
    rescaling_conservation();
    determinism();
    auto trained = autoencoder_fidelity(cfg);
    conditional_fidelity(cfg, trained);
    non_copying(cfg, trained);
    ideal_execution(cfg, trained);
    calibrated_execution(cfg, trained);

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
