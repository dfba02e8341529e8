#include <cmath>
#include <set>

#include "doctest.h"
#include "kinegen/cgan.hpp"
#include "kinegen/errors.hpp"
#include "kinegen/rng.hpp"
#include "test_util.hpp"

using namespace kinegen;
using namespace kinegen::gan;

namespace {

GanConfig tiny_config()
{
    GanConfig c;
    c.seq_len = 4;
    c.noise = 3;
    c.latent = 2;
    c.gen_hidden = 3;
    c.disc_hidden = 3;
    c.lambda = 2.0;
    return c;
}

std::vector<Matrix> random_blocks(std::size_t steps, std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0)
{
    std::normal_distribution<double> g(0.0, scale);
    std::vector<Matrix> out(steps, Matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)));
    for (auto& m : out)
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = g(rng);
    return out;
}

}  // namespace

TEST_CASE("conditioning multiplies every noise step by the label vector")
{
    nn::ParamArray table{"t", {2, 3}, {1, 1, 1, 0, 0, 0}};
    LabelEmbedding emb(table);
    NoiseSequence z{Matrix(3, 2)};
    z.steps << 0.5, -1.0, 2.0, 3.0, -0.25, 0.0;
    CHECK(condition_input(z, data::CarefulnessClass::NotCareful, emb).steps == z.steps);
    CHECK(condition_input(z, data::CarefulnessClass::Careful, emb).steps.isZero(0.0));

    table.values = {0.5, -1.0, 2.0, 0.1, 0.2, 0.3};
    const auto a = condition_input(z, 0.0, emb).steps;
    const auto b = condition_input(z, 1.0, emb).steps;
    CHECK(a(0, 0) == 0.25);
    CHECK(a(1, 1) == -3.0);
    CHECK(a(2, 0) == -0.5);
    CHECK(b(2, 1) == doctest::Approx(0.0));
    CHECK(b(1, 0) == doctest::Approx(0.4));
    CHECK_FALSE(a == b);
    CHECK(emb.vector_for(0.5)(0) == doctest::Approx(0.3));
    CHECK_THROWS_AS(emb.vector_for(1.5), ArgumentError);
    NoiseSequence wrong{Matrix::Ones(2, 2)};
    CHECK_THROWS_AS(condition_input(wrong, 0.0, emb), ShapeError);
}

TEST_CASE("generator and discriminator shapes")
{
    auto cfg = tiny_config();
    Rng rng(1);
    GanModel model(cfg, &rng);
    model.check();
    const auto z = sample_noise(cfg.noise, cfg.seq_len, rng);
    const auto x = generator_forward(model, z, 1.0);
    CHECK(x.width() == cfg.latent);
    CHECK(x.length() == cfg.seq_len);
    CHECK(x.steps.cwiseAbs().maxCoeff() < 1.0);
    const double p = discriminator_forward(model, x, 1.0);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK_THROWS_AS(generator_forward(model, sample_noise(cfg.noise + 1, cfg.seq_len, rng), 0.0), ShapeError);
    CHECK_THROWS_AS(discriminator_forward(model, LatentSequence{Matrix::Zero(2, 3)}, 0.0), ShapeError);

    std::vector<double> labels{0.0, 1.0};
    const auto noise = random_blocks(cfg.seq_len, cfg.noise, 2, rng);
    const auto fake = generate_batch(model, model.generator(), noise, labels);
    REQUIRE(fake.size() == cfg.seq_len);
    for (std::size_t b = 0; b < 2; ++b) {
        NoiseSequence single{Matrix(cfg.noise, cfg.seq_len)};
        for (std::size_t t = 0; t < cfg.seq_len; ++t)
            single.steps.col(static_cast<Eigen::Index>(t)) = noise[t].col(static_cast<Eigen::Index>(b));
        const auto one = generator_forward(model, single, labels[b]);
        for (std::size_t t = 0; t < cfg.seq_len; ++t)
            CHECK((one.steps.col(static_cast<Eigen::Index>(t)) - fake[t].col(static_cast<Eigen::Index>(b)))
                      .cwiseAbs()
                      .maxCoeff() < 1e-14);
    }
}

TEST_CASE("discriminator loss value and gradient")
{
    auto cfg = tiny_config();
    Rng rng(2);
    GanModel model(cfg, &rng);
    const auto real = random_blocks(cfg.seq_len, cfg.latent, 3, rng, 0.5);
    const auto fake = random_blocks(cfg.seq_len, cfg.latent, 2, rng, 0.5);
    const std::vector<double> real_labels{0.0, 1.0, 1.0}, fake_labels{1.0, 0.0};

    const auto pr = discriminate_batch(model, model.discriminator(), real, real_labels);
    const auto pf = discriminate_batch(model, model.discriminator(), fake, fake_labels);
    double expected = 0.0;
    for (Eigen::Index i = 0; i < pr.size(); ++i)
        expected -= std::log(pr(i)) / 3.0;
    for (Eigen::Index i = 0; i < pf.size(); ++i)
        expected -= std::log(1.0 - pf(i)) / 2.0;
    CHECK(discriminator_loss(model, model.discriminator(), real, real_labels, fake, fake_labels, nullptr) ==
          doctest::Approx(expected).epsilon(1e-12));

    const auto r = nn::grad_check(
        [&](const nn::ParamSet& p, nn::ParamSet* g) {
            return discriminator_loss(model, p, real, real_labels, fake, fake_labels, g);
        },
        model.discriminator());
    INFO("worst " << r.worst_array << "[" << r.worst_index << "] " << r.analytic << " vs " << r.numeric);
    CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("generator loss value and gradient")
{
    auto cfg = tiny_config();
    Rng rng(3);
    GanModel model(cfg, &rng);
    const auto noise = random_blocks(cfg.seq_len, cfg.noise, 3, rng);
    const auto paired = random_blocks(cfg.seq_len, cfg.latent, 3, rng, 0.5);
    const std::vector<double> labels{1.0, 0.0, 1.0};

    const auto loss = generator_loss(model, model.generator(), noise, labels, paired, nullptr);
    const auto fake = generate_batch(model, model.generator(), noise, labels);
    const auto prob = discriminate_batch(model, model.discriminator(), fake, labels);
    double adv = 0.0, l2 = 0.0;
    for (std::size_t b = 0; b < 3; ++b) {
        const auto col = static_cast<Eigen::Index>(b);
        adv -= std::log(prob(col)) / 3.0;
        double sq = 0.0;
        for (std::size_t t = 0; t < cfg.seq_len; ++t)
            sq += (fake[t].col(col) - paired[t].col(col)).squaredNorm();
        l2 += std::sqrt(sq) / 3.0;
    }
    CHECK(loss.adversarial == doctest::Approx(adv).epsilon(1e-12));
    CHECK(loss.l2 == doctest::Approx(l2).epsilon(1e-12));
    CHECK(loss.total == doctest::Approx(adv + cfg.lambda * l2).epsilon(1e-12));

    const auto disc_before = model.discriminator();
    const auto r = nn::grad_check(
        [&](const nn::ParamSet& p, nn::ParamSet* g) {
            return generator_loss(model, p, noise, labels, paired, g).total;
        },
        model.generator());
    INFO("worst " << r.worst_array << "[" << r.worst_index << "] " << r.analytic << " vs " << r.numeric);
    CHECK(r.max_relative_error < 1e-4);
    CHECK(model.discriminator() == disc_before);
}

TEST_CASE("pairing stays within the class")
{
    Rng rng(4);
    const std::vector<double> real{0, 1, 0, 1, 1, 0, 0};
    const std::vector<double> fake{1, 1, 0, 0, 1, 0, 1, 0, 1, 1};
    for (int rep = 0; rep < 50; ++rep) {
        const auto idx = pair_same_class(real, fake, rng);
        REQUIRE(idx.size() == fake.size());
        for (std::size_t b = 0; b < fake.size(); ++b)
            CHECK(real[idx[b]] == fake[b]);
    }
    std::set<std::size_t> seen;
    for (int rep = 0; rep < 200; ++rep)
        seen.insert(pair_same_class(real, std::vector<double>{1.0}, rng)[0]);
    CHECK(seen == std::set<std::size_t>{1, 3, 4});
    CHECK_THROWS_AS(pair_same_class(std::vector<double>{0, 0}, std::vector<double>{1}, rng), ArgumentError);
}

TEST_CASE("latent width mismatch names both widths")
{
    auto cfg = tiny_config();
    GanModel gan(cfg);
    ae::AutoencoderModel autoencoder(ae::AutoencoderConfig{cfg.seq_len, 5, 3});
    try {
        require_compatible(gan, autoencoder);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find('2') != std::string::npos);
        CHECK(msg.find('5') != std::string::npos);
    }
    ae::AutoencoderModel longer(ae::AutoencoderConfig{cfg.seq_len + 3, cfg.latent, 3});
    CHECK_THROWS_AS(require_compatible(gan, longer), ConfigError);
    CHECK_THROWS_AS(synthesize(gan, longer, data::CarefulnessClass::Careful, 1, 0, {0.0, 1.0}), ConfigError);
}

TEST_CASE("training and synthesis on a small corpus")
{
    data::SynthConfig sc;
    sc.count_not_careful = 12;
    sc.count_careful = 12;
    const auto corpus = data::make_dataset(sc, 31);
    ae::AutoencoderConfig ac{8, 2, 4};
    ae::TrainConfig at;
    at.epochs = 2;
    const auto autoencoder = ae::train_autoencoder(corpus, ac, at, 31).model;

    GanConfig gc = tiny_config();
    gc.seq_len = 8;
    GanTrainConfig gt;
    gt.epochs = 3;
    gt.batch = 8;
    const auto trained = train_gan(corpus, autoencoder, gc, gt, 9);
    REQUIRE(trained.history.size() == 3);
    for (const auto& e : trained.history) {
        CHECK(std::isfinite(e.d_loss));
        CHECK(std::isfinite(e.g_loss));
        CHECK(e.l2_term >= 0.0);
    }
    CHECK(train_gan(corpus, autoencoder, gc, gt, 9).model.generator() == trained.model.generator());

    const auto& gan = trained.model;
    const auto a = synthesize(gan, autoencoder, data::CarefulnessClass::Careful, 20, 5, corpus.normalization);
    const auto b = synthesize(gan, autoencoder, data::CarefulnessClass::Careful, 20, 5, corpus.normalization);
    const auto c = synthesize(gan, autoencoder, data::CarefulnessClass::Careful, 20, 6, corpus.normalization);
    REQUIRE(a.size() == 20);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    for (const auto& p : a) {
        CHECK(p.label == data::CarefulnessClass::Careful);
        CHECK(p.samples.size() == 8);
        CHECK(p.dt == gan.config().class_dt[1]);
        for (double v : p.samples)
            CHECK(v >= 0.0);
    }
    const auto nc = synthesize(gan, autoencoder, data::CarefulnessClass::NotCareful, 3, 5, corpus.normalization);
    for (const auto& p : nc)
        CHECK(p.label == data::CarefulnessClass::NotCareful);

    Rng pr(0);
    std::vector<LatentSequence> real;
    std::vector<double> real_labels;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& p = corpus.profiles[corpus.train[i * 5]];
        real.push_back(ae::encode(autoencoder, data::network_input(p, 8, corpus.normalization)));
        real_labels.push_back(static_cast<double>(*p.label));
    }
    std::vector<NoiseSequence> z;
    for (int i = 0; i < 3; ++i)
        z.push_back(sample_noise(gc.noise, gc.seq_len, pr));
    const std::vector<double> labels(3, real_labels[0]);
    const auto losses = gan_losses(gan, real, real_labels, z, labels, pr);
    CHECK(losses.d_loss > 0.0);
    CHECK(losses.g_loss >= gan.config().lambda * losses.l2_term);

    data::ProfileCorpus one_class = corpus;
    one_class.train.clear();
    for (std::size_t i = 0; i < corpus.profiles.size(); ++i)
        if (corpus.profiles[i].label == data::CarefulnessClass::Careful)
            one_class.train.push_back(i);
    CHECK_THROWS_AS(train_gan(one_class, autoencoder, gc, gt, 9), ArgumentError);
    gt.epochs = 0;
    CHECK_THROWS_AS(train_gan(corpus, autoencoder, gc, gt, 9), ArgumentError);
}

TEST_CASE("checkpoint round trip")
{
    testutil::TempDir dir;
    auto cfg = tiny_config();
    cfg.class_dt = {0.05, 0.09};
    Rng rng(6);
    GanModel model(cfg, &rng);
    save_model(model, dir.path() / "g.json");
    const auto loaded = load_model(dir.path() / "g.json");
    CHECK(loaded.generator() == model.generator());
    CHECK(loaded.discriminator() == model.discriminator());
    CHECK(loaded.config().class_dt == cfg.class_dt);
    CHECK(loaded.config().lambda == cfg.lambda);

    auto ckpt = to_checkpoint(model);
    ckpt.model_kind = "autoencoder";
    CHECK_THROWS_AS(from_checkpoint(ckpt), ParseError);
}

TEST_CASE("label embedding init draws from the unit interval")
{
    GanConfig cfg;
    Rng rng(7);
    GanModel model(cfg, &rng);
    const auto& v = model.generator().at(GanModel::kGenLabel).values;
    CHECK(v.size() == 2 * cfg.noise);
    for (double x : v) {
        CHECK(x >= -1.0);
        CHECK(x <= 1.0);
    }
    CHECK(cfg.lambda == 100.0);
    GanConfig bad = cfg;
    bad.lambda = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("first-batch discriminator loss sits near 2 ln 2")
{
    data::SynthConfig sc;
    sc.count_not_careful = 16;
    sc.count_careful = 16;
    const auto corpus = data::make_dataset(sc, 3);
    Rng ae_rng(1);
    ae::AutoencoderModel autoencoder(ae::AutoencoderConfig{}, &ae_rng);
    Rng rng(2);
    GanModel model(GanConfig{}, &rng);
    const auto n = model.config().seq_len;

    std::vector<LatentSequence> real;
    std::vector<double> real_labels;
    for (const auto& p : corpus.profiles) {
        real.push_back(ae::encode(autoencoder, data::network_input(p, n, corpus.normalization)));
        real_labels.push_back(static_cast<double>(*p.label));
    }
    std::vector<NoiseSequence> z;
    for (std::size_t i = 0; i < real.size(); ++i)
        z.push_back(sample_noise(model.config().noise, n, rng));
    const auto losses = gan_losses(model, real, real_labels, z, real_labels, rng);
    CHECK(losses.d_loss >= 1.2);
    CHECK(losses.d_loss <= 1.6);
}

TEST_CASE("label swap changes the generated latent and synthesis leaves the decoder alone")
{
    data::SynthConfig sc;
    sc.count_not_careful = 12;
    sc.count_careful = 12;
    const auto corpus = data::make_dataset(sc, 8);
    ae::TrainConfig at;
    at.epochs = 2;
    const auto autoencoder = ae::train_autoencoder(corpus, ae::AutoencoderConfig{8, 2, 4}, at, 1).model;
    GanConfig gc = tiny_config();
    gc.seq_len = 8;
    GanTrainConfig gt;
    gt.epochs = 3;
    gt.batch = 8;
    const auto gan = train_gan(corpus, autoencoder, gc, gt, 2).model;

    Rng rng(10);
    std::size_t changed = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto z = sample_noise(gc.noise, gc.seq_len, rng);
        const auto a = generator_forward(gan, z, 0.0);
        const auto b = generator_forward(gan, z, 1.0);
        changed += (a.steps - b.steps).norm() > 0.0;
    }
    CHECK(changed >= 990);

    const auto before = autoencoder.params().checksum();
    (void)synthesize(gan, autoencoder, data::CarefulnessClass::NotCareful, 50, 1, corpus.normalization);
    CHECK(autoencoder.params().checksum() == before);
}
