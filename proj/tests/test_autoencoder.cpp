#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "kinegen/autoencoder.hpp"
#include "kinegen/errors.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/text.hpp"
#include "test_util.hpp"

using namespace kinegen;
using namespace kinegen::ae;

namespace {

std::vector<double> bump(std::size_t n, double peak, double shift = 0.0)
{
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        v[i] = 0.05 + peak * std::exp(-std::pow((t - 0.5 - shift) / 0.18, 2));
    }
    return v;
}

/// Corpus of already-normalized profiles; identity normalization keeps the network input unchanged.
data::ProfileCorpus toy_corpus(const std::vector<std::vector<double>>& rows)
{
    data::ProfileCorpus c;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        data::VelocityProfile p;
        p.samples = rows[i];
        p.label = i % 2 ? data::CarefulnessClass::Careful : data::CarefulnessClass::NotCareful;
        c.profiles.push_back(p);
        c.train.push_back(i);
    }
    c.normalization = {0.0, 1.0};
    return c;
}

}  // namespace

TEST_CASE("encode and decode shapes")
{
    AutoencoderConfig cfg{12, 3, 5};
    Rng rng(3);
    AutoencoderModel model(cfg, &rng);
    model.check();
    const auto x = bump(12, 0.6);
    const auto z = encode(model, x);
    CHECK(z.width() == 3);
    CHECK(z.length() == 12);
    for (Eigen::Index i = 0; i < z.steps.size(); ++i)
        CHECK(std::abs(z.steps.data()[i]) < 1.0);
    const auto y = decode(model, z);
    REQUIRE(y.size() == 12);
    for (double v : y) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    CHECK_THROWS_AS(encode(model, bump(11, 0.6)), ShapeError);
    LatentSequence bad{Matrix::Zero(4, 12)};
    CHECK_THROWS_AS(decode(model, bad), ShapeError);
    LatentSequence short_seq{Matrix::Zero(3, 10)};
    CHECK_THROWS_AS(decode(model, short_seq), ShapeError);
}

TEST_CASE("zero parameters give zero latents and a flat half-scale decode")
{
    AutoencoderModel model(AutoencoderConfig{8, 2, 4});
    const auto z = encode(model, bump(8, 0.7));
    CHECK(z.steps.isZero(0.0));
    for (double v : decode(model, z))
        CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("batched and single-sample paths agree")
{
    AutoencoderConfig cfg{10, 3, 4};
    Rng rng(8);
    AutoencoderModel model(cfg, &rng);
    std::vector<std::vector<double>> rows{bump(10, 0.3), bump(10, 0.8, 0.1), bump(10, 0.5, -0.1)};
    const Matrix inputs = to_columns(rows, 10);
    const auto blocks = encode_batch(model, inputs);
    const auto seqs = unstack(blocks);
    REQUIRE(seqs.size() == 3);
    for (std::size_t b = 0; b < 3; ++b) {
        const auto single = encode(model, rows[b]);
        CHECK((single.steps - seqs[b].steps).cwiseAbs().maxCoeff() < 1e-14);
    }
    std::vector<std::size_t> all{0, 1, 2};
    const auto restacked = stack(seqs, all);
    REQUIRE(restacked.size() == blocks.size());
    for (std::size_t t = 0; t < blocks.size(); ++t)
        CHECK(restacked[t] == blocks[t]);
    const Matrix out = decode_batch(model, blocks);
    const auto single = decode(model, seqs[1]);
    for (std::size_t i = 0; i < 10; ++i)
        CHECK(out(static_cast<Eigen::Index>(i), 1) == doctest::Approx(single[i]).epsilon(1e-14));
}

TEST_CASE("encode and decode leave parameters untouched")
{
    Rng rng(4);
    AutoencoderModel model(AutoencoderConfig{8, 2, 4}, &rng);
    const auto before = model.params();
    const auto x = bump(8, 0.5);
    const auto a = encode(model, x);
    const auto b = encode(model, x);
    CHECK(a == b);
    CHECK(decode(model, a) == decode(model, b));
    CHECK(model.params() == before);
}

TEST_CASE("reconstruction loss gradient matches finite differences")
{
    Rng rng(21);
    AutoencoderModel model(AutoencoderConfig{4, 2, 3}, &rng);
    std::vector<std::vector<double>> rows{{0.1, 0.6, 0.9, 0.2}, {0.3, 0.35, 0.5, 0.7}};
    const Matrix inputs = to_columns(rows, 4);
    const auto r = nn::grad_check(
        [&](const nn::ParamSet& p, nn::ParamSet* g) { return reconstruction_loss(model, p, inputs, g); },
        model.params());
    INFO("worst " << r.worst_array << "[" << r.worst_index << "] analytic " << r.analytic << " numeric "
                  << r.numeric);
    CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("single profile is memorized")
{
    const auto corpus = toy_corpus({bump(16, 0.6)});
    TrainConfig train;
    train.epochs = 500;
    train.batch = 1;
    train.adam.lr = 1e-2;
    const auto result = train_autoencoder(corpus, AutoencoderConfig{16, 4, 16}, train, 5);
    const std::vector<std::vector<double>> rows{corpus.profiles[0].samples};
    const double rmse = reconstruction_error(result.model, rows);
    CHECK(rmse * rmse < 1e-3);
}

TEST_CASE("training reduces loss on a small set")
{
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 10; ++i)
        rows.push_back(bump(12, 0.3 + 0.05 * i, 0.02 * (i - 5)));
    const auto corpus = toy_corpus(rows);
    TrainConfig train;
    train.epochs = 40;
    train.batch = 4;
    train.adam.lr = 5e-3;
    const auto result = train_autoencoder(corpus, AutoencoderConfig{12, 3, 8}, train, 7);
    REQUIRE(result.history.size() == 40);
    CHECK(result.history.back().train_mse < result.history.front().train_mse);
    for (std::size_t e = 0; e < result.history.size(); ++e)
        CHECK(result.history[e].epoch == e);

    Rng rng(0);
    AutoencoderModel untrained(AutoencoderConfig{12, 3, 8}, &rng);
    CHECK(reconstruction_error(result.model, rows) < reconstruction_error(untrained, rows));

    SUBCASE("rmse does not depend on profile order")
    {
        auto reversed = rows;
        std::reverse(reversed.begin(), reversed.end());
        CHECK(reconstruction_error(result.model, reversed) ==
              doctest::Approx(reconstruction_error(result.model, rows)).epsilon(1e-12));
    }
    SUBCASE("same seed, same model")
    {
        const auto again = train_autoencoder(corpus, AutoencoderConfig{12, 3, 8}, train, 7);
        CHECK(again.model.params() == result.model.params());
        const auto other = train_autoencoder(corpus, AutoencoderConfig{12, 3, 8}, train, 8);
        CHECK_FALSE(other.model.params() == result.model.params());
    }
    SUBCASE("returned parameters come from the best epoch")
    {
        double best = result.history.front().heldout_mse;
        for (const auto& e : result.history)
            best = std::min(best, e.heldout_mse);
        CHECK(result.history[result.best_epoch].heldout_mse == best);
    }
}

TEST_CASE("invalid training requests")
{
    const auto corpus = toy_corpus({bump(8, 0.5), bump(8, 0.4)});
    TrainConfig train;
    train.epochs = 0;
    CHECK_THROWS_AS(train_autoencoder(corpus, AutoencoderConfig{8, 2, 4}, train, 1), ArgumentError);
    train.epochs = 1;
    train.batch = 0;
    CHECK_THROWS_AS(train_autoencoder(corpus, AutoencoderConfig{8, 2, 4}, train, 1), ArgumentError);
    train.batch = 2;
    CHECK_THROWS_AS(train_autoencoder(data::ProfileCorpus{}, AutoencoderConfig{8, 2, 4}, train, 1), ArgumentError);
    CHECK_THROWS_AS(AutoencoderModel(AutoencoderConfig{1, 2, 4}), ConfigError);
}

TEST_CASE("checkpoint round trip")
{
    testutil::TempDir dir;
    Rng rng(12);
    AutoencoderModel model(AutoencoderConfig{10, 3, 6}, &rng);
    model.set_normalization({0.01, 1.2});
    save_model(model, dir.path() / "ae.json");
    const auto loaded = load_model(dir.path() / "ae.json");
    CHECK(loaded.config() == model.config());
    CHECK(loaded.normalization() == model.normalization());
    CHECK(loaded.params() == model.params());
    const auto x = bump(10, 0.4);
    CHECK(decode(loaded, encode(loaded, x)) == decode(model, encode(model, x)));

    auto ckpt = to_checkpoint(model);
    ckpt.model_kind = "cgan";
    CHECK_THROWS_AS(from_checkpoint(ckpt), ParseError);
}

TEST_CASE("training log has one row per epoch")
{
    testutil::TempDir dir;
    std::vector<AeEpoch> hist{{0, 0.5, 0.6}, {1, 0.4, 0.45}, {2, 0.3, 0.35}};
    write_training_log(hist, dir.path() / "log.csv");
    const auto text = text::read_file(dir.path() / "log.csv");
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
