#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kinegen/errors.hpp"
#include "kinegen/pipeline.hpp"

using namespace kinegen;
namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> nc, c;
    std::optional<std::size_t> epochs, ae_epochs, gan_epochs;
    std::optional<std::string> label;
    std::optional<std::size_t> n;
    std::vector<std::string> planes;
    std::optional<std::string> preset;
    std::optional<std::size_t> reps;
    std::optional<double> noise;
    std::optional<std::string> corpus, real, synth, profiles;
    std::string stage = "all";
};

pipeline::RunConfig resolve(const Overrides& o)
{
    pipeline::RunConfig cfg = o.config ? pipeline::load_config(*o.config) : pipeline::RunConfig{};
    if (o.seed)
        cfg.seed = *o.seed;
    if (o.out)
        cfg.out = *o.out;
    if (o.nc)
        cfg.corpus.count_not_careful = *o.nc;
    if (o.c)
        cfg.corpus.count_careful = *o.c;
    if (o.epochs)
        cfg.autoencoder_train.epochs = cfg.gan_train.epochs = *o.epochs;
    if (o.ae_epochs)
        cfg.autoencoder_train.epochs = *o.ae_epochs;
    if (o.gan_epochs)
        cfg.gan_train.epochs = *o.gan_epochs;
    if (o.label) {
        if (*o.label == "all" || *o.label == "both")
            cfg.synthesize.label.reset();
        else
            cfg.synthesize.label = data::parse_class(*o.label);
    }
    if (o.n)
        cfg.synthesize.n = *o.n;
    if (!o.planes.empty()) {
        cfg.execute.planes.clear();
        for (const auto& p : o.planes)
            cfg.execute.planes.push_back(traj::parse_plane(p));
    }
    if (o.preset)
        cfg.execute.preset = *o.preset;
    if (o.reps)
        cfg.execute.reps = *o.reps;
    if (o.noise)
        cfg.execute.noise_sd = *o.noise;
    cfg.validate();
    return cfg;
}

std::optional<fs::path> as_path(const std::optional<std::string>& s)
{
    return s ? std::optional<fs::path>(*s) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Conditional generation and robot execution of Careful/NotCareful velocity profiles"};
    app.require_subcommand(1);
    Overrides o;
    app.add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "master seed");
    app.add_option("--out", o.out, "output directory");

    auto* generate = app.add_subcommand("generate", "write the surrogate corpus");
    auto* train = app.add_subcommand("train", "train the autoencoder, then the GAN");
    auto* synthesize = app.add_subcommand("synthesize", "sample profiles from the trained models");
    auto* evaluate = app.add_subcommand("evaluate", "compare real and synthetic profiles");
    auto* execute = app.add_subcommand("execute", "simulate robot execution of selected profiles");
    auto* report = app.add_subcommand("report", "run the whole pipeline");

    for (auto* cmd : {generate, report}) {
        cmd->add_option("--nc", o.nc, "NotCareful profile count");
        cmd->add_option("--c", o.c, "Careful profile count");
    }
    for (auto* cmd : {train, report}) {
        cmd->add_option("--epochs", o.epochs, "epochs for both stages");
        cmd->add_option("--ae-epochs", o.ae_epochs, "autoencoder epochs");
        cmd->add_option("--gan-epochs", o.gan_epochs, "GAN epochs");
    }
    train->add_option("--stage", o.stage, "all, autoencoder or gan")
        ->check(CLI::IsMember({"all", "autoencoder", "gan"}));
    train->add_option("--corpus", o.corpus, "corpus CSV (default <out>/corpus.csv)");
    for (auto* cmd : {synthesize, report}) {
        cmd->add_option("--n", o.n, "profiles per class");
    }
    synthesize->add_option("--label", o.label, "NC, C or all");
    evaluate->add_option("--real", o.real, "real corpus CSV");
    evaluate->add_option("--synth", o.synth, "synthetic profiles CSV");
    for (auto* cmd : {execute, report}) {
        cmd->add_option("--preset", o.preset, "actuator preset");
        cmd->add_option("--reps", o.reps, "repetitions per profile and plane");
        cmd->add_option("--noise", o.noise, "commanded-speed noise sd (m/s)");
        cmd->add_option("--plane", o.planes, "plane (repeatable)");
    }
    execute->add_option("--profiles", o.profiles, "profiles CSV (default <out>/synthetic_all.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : pipeline::kConfigError;
    }

    try {
        const auto cfg = resolve(o);
        if (generate->parsed())
            pipeline::cmd_generate(cfg, std::cout);
        else if (train->parsed()) {
            const auto stage = o.stage == "autoencoder" ? pipeline::TrainStage::Autoencoder
                               : o.stage == "gan"       ? pipeline::TrainStage::Gan
                                                        : pipeline::TrainStage::All;
            pipeline::cmd_train(cfg, stage, as_path(o.corpus), std::cout);
        } else if (synthesize->parsed())
            pipeline::cmd_synthesize(cfg, std::cout);
        else if (evaluate->parsed())
            pipeline::cmd_evaluate(cfg, as_path(o.real), as_path(o.synth), std::cout);
        else if (execute->parsed())
            pipeline::cmd_execute(cfg, as_path(o.profiles), std::cout);
        else if (report->parsed())
            pipeline::cmd_report(cfg, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pipeline::exit_code_for(e);
    }
    return 0;
}
