#include "kinegen/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <ostream>
#include <set>

#include "kinegen/errors.hpp"
#include "kinegen/eval_metrics.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/text.hpp"

namespace kinegen::pipeline {

namespace fs = std::filesystem;
using data::CarefulnessClass;
using nlohmann::json;

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
        dynamic_cast<const ShapeError*>(&e))
        return kConfigError;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e))
        return kIoError;
    if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DegenerateProfileError*>(&e) ||
        dynamic_cast<const UndefinedCorrelationError*>(&e))
        return kNumericalError;
    return kFailure;
}

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const
{
    corpus.validate();
    if (autoencoder.seq_len < 2 || autoencoder.latent == 0 || autoencoder.hidden == 0)
        throw ConfigError("autoencoder seq_len must be >= 2 and latent, hidden positive");
    if (autoencoder_train.epochs == 0 || autoencoder_train.batch == 0)
        throw ConfigError("autoencoder epochs and batch must be positive");
    if (gan.noise == 0 || gan.gen_hidden == 0 || gan.disc_hidden == 0)
        throw ConfigError("GAN noise, gen_hidden and disc_hidden must be positive");
    if (gan.latent != autoencoder.latent)
        throw ConfigError("GAN latent width " + std::to_string(gan.latent) + " differs from autoencoder latent width " +
                          std::to_string(autoencoder.latent));
    if (!(gan.lambda >= 0.0))
        throw ConfigError("GAN lambda must be non-negative");
    if (gan_train.epochs == 0 || gan_train.batch < 2)
        throw ConfigError("GAN epochs must be positive and batch at least 2");
    for (const auto* lr : {&autoencoder_train.adam.lr, &gan_train.adam.lr})
        if (!(*lr > 0.0))
            throw ConfigError("learning rates must be positive");
    if (!(thresholds.label_consistency >= 0.0 && thresholds.label_consistency <= 1.0) ||
        !(thresholds.copy_fraction >= 0.0 && thresholds.copy_fraction <= 1.0))
        throw ConfigError("thresholds must lie in [0, 1]");
    std::set<std::string> names;
    for (const auto& p : presets) {
        p.validate();
        if (!names.insert(p.name).second)
            throw ConfigError("duplicate preset name '" + p.name + "'");
    }
    (void)traj::find_preset(presets, execute.preset);
    if (execute.planes.empty())
        throw ConfigError("at least one plane must be selected");
    if (execute.reps == 0 || execute.per_class == 0)
        throw ConfigError("repetitions and profiles per class must be positive");
    if (execute.noise_sd && !(*execute.noise_sd >= 0.0))
        throw ConfigError("noise sd must be non-negative");
    if (synthesize.n == 0)
        throw ConfigError("synthesis count must be positive");
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& section)
{
    if (!j.is_object())
        throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ConfigError("unknown config key '" + section + (section.empty() ? "" : ".") + key + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& section)
{
    if (!j.contains(key))
        return;
    try {
        const auto& v = j.at(key);
        if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number())
                throw ConfigError("");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
                throw ConfigError("");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string())
                throw ConfigError("");
        }
        out = v.get<T>();
    } catch (const std::exception&) {
        throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
    }
}

void read_class_params(const json& j, data::ClassParams& p, const std::string& section)
{
    check_keys(j, {"duration_min", "duration_max", "peak_min", "peak_max"}, section);
    read(j, "duration_min", p.duration_min, section);
    read(j, "duration_max", p.duration_max, section);
    read(j, "peak_min", p.peak_min, section);
    read(j, "peak_max", p.peak_max, section);
}

CarefulnessClass class_or_config_error(const std::string& text)
{
    try {
        return data::parse_class(text);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

RunConfig config_from_json(const json& j, RunConfig cfg)
{
    check_keys(j, {"seed", "out", "corpus", "autoencoder", "gan", "thresholds", "presets", "execute", "synthesize"},
               "");
    read(j, "seed", cfg.seed, "root");
    if (j.contains("out")) {
        std::string out;
        read(j, "out", out, "root");
        cfg.out = out;
    }
    if (j.contains("corpus")) {
        const auto& c = j.at("corpus");
        check_keys(c,
                   {"count_not_careful", "count_careful", "not_careful", "careful", "dt", "noise_fraction",
                    "smoothing_window", "heldout_fraction"},
                   "corpus");
        read(c, "count_not_careful", cfg.corpus.count_not_careful, "corpus");
        read(c, "count_careful", cfg.corpus.count_careful, "corpus");
        read(c, "dt", cfg.corpus.dt, "corpus");
        read(c, "noise_fraction", cfg.corpus.noise_fraction, "corpus");
        read(c, "smoothing_window", cfg.corpus.smoothing_window, "corpus");
        read(c, "heldout_fraction", cfg.corpus.heldout_fraction, "corpus");
        if (c.contains("not_careful"))
            read_class_params(c.at("not_careful"), cfg.corpus.not_careful, "corpus.not_careful");
        if (c.contains("careful"))
            read_class_params(c.at("careful"), cfg.corpus.careful, "corpus.careful");
    }
    if (j.contains("autoencoder")) {
        const auto& a = j.at("autoencoder");
        check_keys(a, {"seq_len", "latent", "hidden", "epochs", "batch", "learning_rate"}, "autoencoder");
        read(a, "seq_len", cfg.autoencoder.seq_len, "autoencoder");
        read(a, "latent", cfg.autoencoder.latent, "autoencoder");
        read(a, "hidden", cfg.autoencoder.hidden, "autoencoder");
        read(a, "epochs", cfg.autoencoder_train.epochs, "autoencoder");
        read(a, "batch", cfg.autoencoder_train.batch, "autoencoder");
        read(a, "learning_rate", cfg.autoencoder_train.adam.lr, "autoencoder");
    }
    cfg.gan.seq_len = cfg.autoencoder.seq_len;
    cfg.gan.latent = cfg.autoencoder.latent;
    if (j.contains("gan")) {
        const auto& g = j.at("gan");
        check_keys(g, {"noise", "gen_hidden", "disc_hidden", "lambda", "epochs", "batch", "learning_rate"}, "gan");
        read(g, "noise", cfg.gan.noise, "gan");
        read(g, "gen_hidden", cfg.gan.gen_hidden, "gan");
        read(g, "disc_hidden", cfg.gan.disc_hidden, "gan");
        read(g, "lambda", cfg.gan.lambda, "gan");
        read(g, "epochs", cfg.gan_train.epochs, "gan");
        read(g, "batch", cfg.gan_train.batch, "gan");
        read(g, "learning_rate", cfg.gan_train.adam.lr, "gan");
    }
    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        check_keys(t, {"label_consistency", "copy_fraction"}, "thresholds");
        read(t, "label_consistency", cfg.thresholds.label_consistency, "thresholds");
        read(t, "copy_fraction", cfg.thresholds.copy_fraction, "thresholds");
    }
    if (j.contains("presets")) {
        for (auto& p : traj::presets_from_json(j.at("presets"))) {
            auto it = std::find_if(cfg.presets.begin(), cfg.presets.end(),
                                   [&](const traj::ActuatorPreset& q) { return q.name == p.name; });
            if (it != cfg.presets.end())
                *it = std::move(p);
            else
                cfg.presets.push_back(std::move(p));
        }
    }
    if (j.contains("execute")) {
        const auto& e = j.at("execute");
        check_keys(e, {"preset", "planes", "reps", "profiles_per_class", "noise_sd", "threads"}, "execute");
        read(e, "preset", cfg.execute.preset, "execute");
        read(e, "reps", cfg.execute.reps, "execute");
        read(e, "profiles_per_class", cfg.execute.per_class, "execute");
        read(e, "threads", cfg.execute.threads, "execute");
        if (e.contains("noise_sd")) {
            double sd = 0.0;
            read(e, "noise_sd", sd, "execute");
            cfg.execute.noise_sd = sd;
        }
        if (e.contains("planes")) {
            if (!e.at("planes").is_array())
                throw ConfigError("config key 'execute.planes' must be an array");
            cfg.execute.planes.clear();
            for (const auto& p : e.at("planes")) {
                try {
                    cfg.execute.planes.push_back(traj::parse_plane(p.get<std::string>()));
                } catch (const std::exception& ex) {
                    throw ConfigError(std::string("execute.planes: ") + ex.what());
                }
            }
        }
    }
    if (j.contains("synthesize")) {
        const auto& s = j.at("synthesize");
        check_keys(s, {"label", "n"}, "synthesize");
        read(s, "n", cfg.synthesize.n, "synthesize");
        if (s.contains("label")) {
            std::string label;
            read(s, "label", label, "synthesize");
            if (label == "all" || label == "both")
                cfg.synthesize.label.reset();
            else
                cfg.synthesize.label = class_or_config_error(label);
        }
    }
    return cfg;
}

RunConfig load_config(const fs::path& path)
{
    const auto body = text::read_file(path);
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

fs::path Layout::synthetic(const std::optional<CarefulnessClass>& label) const
{
    return root / ("synthetic_" + (label ? std::string(data::to_string(*label)) : std::string("all")) + ".csv");
}

std::size_t threads_from_env()
{
    const char* v = std::getenv("KINEGEN_THREADS");
    if (!v || !*v)
        return 1;
    std::size_t n = 0;
    if (!text::parse_size(v, n) || n == 0)
        throw ConfigError("KINEGEN_THREADS must be a positive integer, got '" + std::string(v) + "'");
    return n;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

void require_file(const fs::path& p, const std::string& hint)
{
    if (!fs::is_regular_file(p))
        throw IoError("missing " + p.string() + (hint.empty() ? "" : " (" + hint + ")"));
}

std::string class_name(const data::VelocityProfile& p)
{
    return p.label ? std::string(data::to_string(*p.label)) : std::string("Unlabeled");
}

}  // namespace

void cmd_generate(const RunConfig& cfg, std::ostream& log)
{
    cfg.validate();
    const Layout layout{cfg.out};
    const auto corpus = data::make_dataset(cfg.corpus, cfg.seed);
    data::save_corpus(corpus, layout.corpus());
    log << "wrote " << layout.corpus().string() << ": " << corpus.profiles.size() << " profiles ("
        << corpus.count(CarefulnessClass::NotCareful) << " NotCareful, " << corpus.count(CarefulnessClass::Careful)
        << " Careful)\n";
}

void cmd_train(const RunConfig& cfg, TrainStage stage, const std::optional<fs::path>& corpus_path, std::ostream& log)
{
    cfg.validate();
    const Layout layout{cfg.out};
    const auto path = corpus_path.value_or(layout.corpus());
    require_file(path, "run `generate` first");
    if (stage == TrainStage::Gan)
        require_file(layout.autoencoder(), "GAN training needs a trained autoencoder; run the autoencoder stage first");
    const auto corpus = data::load_corpus(path);

    ae::AutoencoderModel autoencoder;
    if (stage == TrainStage::Gan) {
        autoencoder = ae::load_model(layout.autoencoder());
    } else {
        log << "stage 1: autoencoder, " << cfg.autoencoder_train.epochs << " epochs\n";
        auto result = ae::train_autoencoder(corpus, cfg.autoencoder, cfg.autoencoder_train,
                                            derive_seed(cfg.seed, "ae"));
        ae::save_model(result.model, layout.autoencoder());
        ae::write_training_log(result.history, layout.autoencoder_log());
        const auto& best = result.history[result.best_epoch];
        log << "  best epoch " << best.epoch << ", held-out mse " << best.heldout_mse << "\n";
        autoencoder = std::move(result.model);
    }
    if (stage == TrainStage::Autoencoder)
        return;

    log << "stage 2: GAN, " << cfg.gan_train.epochs << " epochs (autoencoder frozen)\n";
    auto gan_cfg = cfg.gan;
    gan_cfg.seq_len = autoencoder.config().seq_len;
    auto result = gan::train_gan(corpus, autoencoder, gan_cfg, cfg.gan_train, derive_seed(cfg.seed, "gan"));
    gan::save_model(result.model, layout.gan());
    gan::write_training_log(result.history, layout.gan_log());
    const auto& last = result.history.back();
    log << "  final d_loss " << last.d_loss << ", g_loss " << last.g_loss << ", l2 " << last.l2_term << "\n";
}

void cmd_synthesize(const RunConfig& cfg, std::ostream& log)
{
    cfg.validate();
    const Layout layout{cfg.out};
    require_file(layout.autoencoder(), "run `train` first");
    require_file(layout.gan(), "run `train` first");
    const auto autoencoder = ae::load_model(layout.autoencoder());
    const auto model = gan::load_model(layout.gan());
    gan::require_compatible(model, autoencoder);

    std::vector<CarefulnessClass> labels;
    if (cfg.synthesize.label)
        labels.push_back(*cfg.synthesize.label);
    else
        labels = {CarefulnessClass::NotCareful, CarefulnessClass::Careful};
    std::vector<data::VelocityProfile> out;
    for (auto label : labels) {
        auto batch = gan::synthesize(model, autoencoder, label, cfg.synthesize.n, derive_seed(cfg.seed, "synth"),
                                     autoencoder.normalization());
        out.insert(out.end(), batch.begin(), batch.end());
    }
    const auto path = layout.synthetic(cfg.synthesize.label);
    data::write_profiles_csv(out, path);
    log << "wrote " << path.string() << ": " << out.size() << " profiles\n";
}

void cmd_evaluate(const RunConfig& cfg, const std::optional<fs::path>& real_path,
                  const std::optional<fs::path>& synth_path, std::ostream& log)
{
    cfg.validate();
    const Layout layout{cfg.out};
    const auto rp = real_path.value_or(layout.corpus());
    const auto sp = synth_path.value_or(layout.synthetic(std::nullopt));
    require_file(rp, "real corpus");
    require_file(sp, "synthetic corpus");
    const auto real = data::load_corpus(rp);
    const auto synth = data::read_profiles_csv(sp);
    if (real.profiles.empty() || synth.empty())
        throw ArgumentError("evaluation needs non-empty real and synthetic sets");

    const auto n = cfg.autoencoder.seq_len;
    // Model outputs have a fixed length; it must be the evaluation length.
    const bool fixed_length = std::all_of(synth.begin(), synth.end(),
                                          [&](const auto& p) { return p.size() == synth.front().size(); });
    if (fixed_length && synth.front().size() != n && synth.size() > 1)
        throw ShapeError("synthetic profiles have " + std::to_string(synth.front().size()) +
                         " samples but the evaluation length is " + std::to_string(n));

    const auto report = eval::fidelity_report(real.profiles, synth, n, real.normalization);
    eval::write_report(report, layout.report());
    log << "wrote " << layout.report().string() << "\n"
        << "  label consistency " << report.consistency.accuracy << " (threshold " << cfg.thresholds.label_consistency
        << ")\n"
        << "  fraction within real p10 distance " << report.fraction_within_real_p10 << " (threshold "
        << cfg.thresholds.copy_fraction << "), exact duplicates " << report.exact_duplicates << "\n";
}

std::vector<std::size_t> select_profiles(const std::vector<data::VelocityProfile>& profiles, std::size_t per_class,
                                         std::uint64_t seed)
{
    std::vector<std::size_t> out;
    for (auto c : {CarefulnessClass::NotCareful, CarefulnessClass::Careful}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < profiles.size(); ++i)
            if (profiles[i].label == c)
                idx.push_back(i);
        if (idx.size() < per_class)
            throw ArgumentError("need " + std::to_string(per_class) + " " + std::string(data::to_string(c)) +
                                " profiles, found " + std::to_string(idx.size()));
        auto rng = make_rng(seed, "exec-select", static_cast<std::uint64_t>(c));
        std::shuffle(idx.begin(), idx.end(), rng);
        out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
    }
    std::sort(out.begin(), out.end());
    return out;
}

void cmd_execute(const RunConfig& cfg, const std::optional<fs::path>& profiles_path, std::ostream& log)
{
    cfg.validate();
    const Layout layout{cfg.out};
    auto preset = traj::find_preset(cfg.presets, cfg.execute.preset);
    if (cfg.execute.noise_sd)
        preset.noise_sd = *cfg.execute.noise_sd;
    const auto path = profiles_path.value_or(layout.synthetic(std::nullopt));
    require_file(path, "profiles to execute");
    const auto profiles = data::read_profiles_csv(path);
    const auto chosen = select_profiles(profiles, cfg.execute.per_class, derive_seed(cfg.seed, "exec"));
    const auto threads = std::max(cfg.execute.threads, threads_from_env());

    std::vector<traj::MetricsRow> rows;
    std::vector<std::pair<std::string, std::string>> traces;
    std::map<std::string, std::vector<double>> r_by_class, ratio_by_class, delay_by_class;
    for (auto id : chosen) {
        for (auto plane : cfg.execute.planes) {
            const auto route = traj::make_path(plane, preset.length_for(plane));
            const auto planned = traj::rescale_profile(profiles[id], route.length());
            const auto seed = derive_seed(derive_seed(cfg.seed, "exec", id), traj::to_string(plane));
            auto result = traj::repeat_runs(planned, route, preset, cfg.execute.reps, seed, threads);
            const auto label = class_name(profiles[id]);
            for (std::size_t r = 0; r < result.runs.size(); ++r) {
                const auto& m = result.runs[r];
                rows.push_back({id, label, plane, r, m});
                r_by_class[label].push_back(m.pearson_r);
                ratio_by_class[label].push_back(m.peak_executed / m.peak_planned);
                delay_by_class[label].push_back(m.peak_delay);
                auto& trace = result.traces[r];
                trace.metadata.profile_id = id;
                traces.emplace_back("p" + std::to_string(id) + "_" + std::string(traj::to_string(plane)) + "_r" +
                                        std::to_string(r) + ".csv",
                                    traj::trace_csv(trace));
            }
        }
    }

    const auto dir = layout.execution();
    text::write_file(dir / "metrics.csv", traj::metrics_csv(rows));
    for (const auto& [name, body] : traces)
        text::write_file(dir / "traces" / name, body);
    json summary = {{"preset", traj::to_json(preset)}, {"rows", rows.size()}, {"classes", json::object()}};
    log << "wrote " << (dir / "metrics.csv").string() << ": " << rows.size() << " rows, preset " << preset.name
        << "\n";
    for (const auto& [label, rs] : r_by_class) {
        const double median_r = eval::quantile(rs, 0.5);
        const double median_ratio = eval::quantile(ratio_by_class[label], 0.5);
        const double median_delay = eval::quantile(delay_by_class[label], 0.5);
        summary["classes"][label] = {{"median_pearson_r", median_r},
                                     {"median_peak_ratio", median_ratio},
                                     {"median_peak_delay_s", median_delay}};
        log << "  " << label << ": median r " << median_r << ", median peak ratio " << median_ratio
            << ", median delay " << median_delay << " s\n";
    }
    text::write_file(dir / "summary.json", summary.dump(2) + "\n");
}

void cmd_report(const RunConfig& cfg, std::ostream& log)
{
    cfg.validate();
    auto synth_cfg = cfg;
    synth_cfg.synthesize.label.reset();
    cmd_generate(cfg, log);
    cmd_train(cfg, TrainStage::All, std::nullopt, log);
    cmd_synthesize(synth_cfg, log);
    cmd_evaluate(cfg, std::nullopt, std::nullopt, log);
    cmd_execute(cfg, Layout{cfg.out}.synthetic(std::nullopt), log);
}

}  // namespace kinegen::pipeline
