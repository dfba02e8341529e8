#include "kinegen/cgan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kinegen/errors.hpp"
#include "kinegen/text.hpp"

namespace kinegen::gan {

using nn::join_steps;
using nn::ParamSet;
using nn::split_steps;

void GanConfig::validate() const
{
    if (seq_len < 2 || noise == 0 || latent == 0 || gen_hidden == 0 || disc_hidden == 0)
        throw ConfigError("GAN config needs seq_len >= 2 and positive widths");
    if (!(lambda > 0.0))
        throw ConfigError("GAN lambda must be positive");
    for (double dt : class_dt) {
        if (!(dt > 0.0))
            throw ConfigError("GAN class_dt entries must be positive");
    }
}

LabelEmbedding::LabelEmbedding(const nn::ParamArray& table) : table_(&table), width_(table.cols())
{
    if (table.shape.size() != 2 || table.shape[0] != 2)
        throw ShapeError("label embedding '" + table.name + "' must have shape (2, width)");
}

Vector LabelEmbedding::vector_for(double label) const
{
    if (!(label >= 0.0 && label <= 1.0))
        throw ArgumentError("conditioning label must lie in [0, 1]");
    const auto m = table_->matrix();
    if (label == 0.0)
        return m.row(0).transpose();
    if (label == 1.0)
        return m.row(1).transpose();
    return ((1.0 - label) * m.row(0) + label * m.row(1)).transpose();
}

GanModel::GanModel(const GanConfig& cfg, Rng* rng) : config_(cfg)
{
    cfg.validate();
    auto& gen_label = generator_.add(kGenLabel, {2, cfg.noise});
    generator_cell().declare(generator_);
    generator_head().declare(generator_);

    discriminator_projection().declare(discriminator_);
    auto& disc_label = discriminator_.add(kDiscLabel, {2, cfg.noise});
    discriminator_cell().declare(discriminator_);
    discriminator_head().declare(discriminator_);

    if (rng) {
        // A lookup has fan-in 1, so the table draws from U[-1, 1].
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto& v : gen_label.values)
            v = u(*rng);
        generator_cell().initialize(generator_, *rng);
        generator_head().initialize(generator_, *rng);
        discriminator_projection().initialize(discriminator_, *rng);
        for (auto& v : disc_label.values)
            v = u(*rng);
        discriminator_cell().initialize(discriminator_, *rng);
        discriminator_head().initialize(discriminator_, *rng);
    }
}

void GanModel::check() const
{
    (void)LabelEmbedding(generator_.at(kGenLabel));
    if (generator_.at(kGenLabel).cols() != config_.noise)
        throw ShapeError("parameter 'gen.label' width does not match noise width");
    generator_cell().check(generator_);
    generator_head().check(generator_);
    discriminator_projection().check(discriminator_);
    if (discriminator_.at(kDiscLabel).shape != std::vector<std::size_t>{2, config_.noise})
        throw ShapeError("parameter 'disc.label' must have shape (2, noise)");
    discriminator_cell().check(discriminator_);
    discriminator_head().check(discriminator_);
}

NoiseSequence sample_noise(std::size_t width, std::size_t length, Rng& rng)
{
    std::normal_distribution<double> gauss(0.0, 1.0);
    NoiseSequence z{Matrix(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(length))};
    for (Eigen::Index t = 0; t < z.steps.cols(); ++t)
        for (Eigen::Index r = 0; r < z.steps.rows(); ++r)
            z.steps(r, t) = gauss(rng);
    return z;
}

NoiseSequence condition_input(const NoiseSequence& z, double label, const LabelEmbedding& emb)
{
    if (z.width() != emb.width())
        throw ShapeError("noise width " + std::to_string(z.width()) + " does not match label embedding width " +
                         std::to_string(emb.width()));
    const Vector e = emb.vector_for(label);
    return NoiseSequence{(z.steps.array().colwise() * e.array()).matrix()};
}

namespace {

/// Columns are the (possibly interpolated) label vectors of each batch element.
Matrix label_columns(const nn::ParamArray& table, std::span<const double> labels)
{
    const LabelEmbedding emb(table);
    Matrix out(static_cast<Eigen::Index>(emb.width()), static_cast<Eigen::Index>(labels.size()));
    for (std::size_t b = 0; b < labels.size(); ++b)
        out.col(static_cast<Eigen::Index>(b)) = emb.vector_for(labels[b]);
    return out;
}

void accumulate_label_grad(nn::ParamArray& grad_table, const Matrix& d_cols, std::span<const double> labels)
{
    auto g = grad_table.matrix();
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const auto col = d_cols.col(static_cast<Eigen::Index>(b)).transpose();
        g.row(0) += (1.0 - labels[b]) * col;
        g.row(1) += labels[b] * col;
    }
}

void require_blocks(const std::vector<Matrix>& blocks, std::size_t steps, std::size_t width, std::size_t batch,
                    const char* what)
{
    if (blocks.size() != steps)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(steps) + " steps, got " +
                         std::to_string(blocks.size()));
    for (const auto& b : blocks) {
        if (static_cast<std::size_t>(b.rows()) != width || static_cast<std::size_t>(b.cols()) != batch)
            throw ShapeError(std::string(what) + ": expected blocks of " + std::to_string(width) + " x " +
                             std::to_string(batch) + ", got " + std::to_string(b.rows()) + " x " +
                             std::to_string(b.cols()));
    }
}

struct GenPass {
    Matrix labels;                // Z x B
    std::vector<Matrix> noise;    // N blocks Z x B
    nn::LstmCache cell;
    Matrix hidden;                // H x (N*B)
    Matrix latent;                // E x (N*B)
};

GenPass run_generator(const GanModel& model, const ParamSet& params, const std::vector<Matrix>& noise,
                      std::span<const double> labels, bool keep_cache)
{
    const auto& cfg = model.config();
    require_blocks(noise, cfg.seq_len, cfg.noise, labels.size(), "generator noise");
    GenPass pass;
    pass.labels = label_columns(params.at(GanModel::kGenLabel), labels);
    std::vector<Matrix> conditioned(noise.size());
    for (std::size_t t = 0; t < noise.size(); ++t)
        conditioned[t] = (noise[t].array() * pass.labels.array()).matrix();
    pass.hidden = join_steps(model.generator_cell().forward(params, conditioned, keep_cache ? &pass.cell : nullptr));
    pass.latent = model.generator_head().forward(params, pass.hidden);
    if (keep_cache)
        pass.noise = noise;
    return pass;
}

void backprop_generator(const GanModel& model, const ParamSet& params, const GenPass& pass, const Matrix& d_latent,
                        std::span<const double> labels, ParamSet& grads)
{
    const auto steps = model.config().seq_len;
    const Matrix dh = model.generator_head().backward(params, pass.hidden, pass.latent, d_latent, grads);
    const auto du = model.generator_cell().backward(params, pass.cell, split_steps(dh, steps), grads);
    Matrix d_labels = Matrix::Zero(pass.labels.rows(), pass.labels.cols());
    for (std::size_t t = 0; t < steps; ++t)
        d_labels += (du[t].array() * pass.noise[t].array()).matrix();
    accumulate_label_grad(grads.at(GanModel::kGenLabel), d_labels, labels);
}

struct DiscPass {
    Matrix input;      // E x (N*B)
    Matrix projected;  // Z x (N*B)
    Matrix labels;     // Z x B
    nn::LstmCache cell;
    Matrix last_hidden;
    Vector prob;
};

DiscPass run_discriminator(const GanModel& model, const ParamSet& params, const std::vector<Matrix>& latents,
                           std::span<const double> labels, bool keep_cache)
{
    const auto& cfg = model.config();
    require_blocks(latents, cfg.seq_len, cfg.latent, labels.size(), "discriminator input");
    const auto steps = cfg.seq_len;
    DiscPass pass;
    pass.input = join_steps(latents);
    pass.projected = model.discriminator_projection().forward(params, pass.input);
    pass.labels = label_columns(params.at(GanModel::kDiscLabel), labels);
    auto proj_steps = split_steps(pass.projected, steps);
    for (auto& p : proj_steps)
        p = (p.array() * pass.labels.array()).matrix();
    const auto hs = model.discriminator_cell().forward(params, proj_steps, keep_cache ? &pass.cell : nullptr);
    pass.last_hidden = hs.back();
    const Matrix p = model.discriminator_head().forward(params, pass.last_hidden);
    pass.prob = p.row(0).transpose();
    return pass;
}

/// Returns dL/d(latents) as N blocks; accumulates discriminator gradients into grads.
std::vector<Matrix> backprop_discriminator(const GanModel& model, const ParamSet& params, const DiscPass& pass,
                                           const Vector& d_prob, std::span<const double> labels, ParamSet& grads)
{
    const auto steps = model.config().seq_len;
    const Matrix p = pass.prob.transpose();
    const Matrix dp = d_prob.transpose();
    const Matrix dh_last = model.discriminator_head().backward(params, pass.last_hidden, p, dp, grads);
    std::vector<Matrix> dh(steps);
    dh.back() = dh_last;
    const auto dv = model.discriminator_cell().backward(params, pass.cell, dh, grads);

    const auto proj_steps = split_steps(pass.projected, steps);
    Matrix d_labels = Matrix::Zero(pass.labels.rows(), pass.labels.cols());
    std::vector<Matrix> d_proj(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        d_labels += (dv[t].array() * proj_steps[t].array()).matrix();
        d_proj[t] = (dv[t].array() * pass.labels.array()).matrix();
    }
    accumulate_label_grad(grads.at(GanModel::kDiscLabel), d_labels, labels);
    const Matrix dx = model.discriminator_projection().backward(params, pass.input, pass.projected,
                                                                join_steps(d_proj), grads);
    return split_steps(dx, steps);
}

}  // namespace

std::vector<Matrix> generate_batch(const GanModel& model, const ParamSet& gen_params, const std::vector<Matrix>& noise,
                                   std::span<const double> labels)
{
    return split_steps(run_generator(model, gen_params, noise, labels, false).latent, model.config().seq_len);
}

Vector discriminate_batch(const GanModel& model, const ParamSet& disc_params, const std::vector<Matrix>& latents,
                          std::span<const double> labels)
{
    return run_discriminator(model, disc_params, latents, labels, false).prob;
}

LatentSequence generator_forward(const GanModel& model, const NoiseSequence& z, double label)
{
    if (z.length() != model.config().seq_len || z.width() != model.config().noise)
        throw ShapeError("generator expects noise of shape " + std::to_string(model.config().noise) + " x " +
                         std::to_string(model.config().seq_len) + ", got " + std::to_string(z.width()) + " x " +
                         std::to_string(z.length()));
    std::vector<Matrix> blocks(z.length());
    for (std::size_t t = 0; t < z.length(); ++t)
        blocks[t] = z.steps.col(static_cast<Eigen::Index>(t));
    return ae::unstack(generate_batch(model, model.generator(), blocks, std::span(&label, 1))).front();
}

double discriminator_forward(const GanModel& model, const LatentSequence& x, double label)
{
    if (x.length() != model.config().seq_len || x.width() != model.config().latent)
        throw ShapeError("discriminator expects a latent of shape " + std::to_string(model.config().latent) + " x " +
                         std::to_string(model.config().seq_len) + ", got " + std::to_string(x.width()) + " x " +
                         std::to_string(x.length()));
    const std::size_t which = 0;
    const auto blocks = ae::stack(std::span(&x, 1), std::span(&which, 1));
    return discriminate_batch(model, model.discriminator(), blocks, std::span(&label, 1))(0);
}

double discriminator_loss(const GanModel& model, const ParamSet& disc_params, const std::vector<Matrix>& real,
                          std::span<const double> real_labels, const std::vector<Matrix>& fake,
                          std::span<const double> fake_labels, ParamSet* disc_grads)
{
    if (real_labels.empty() || fake_labels.empty())
        throw ArgumentError("discriminator loss needs non-empty real and fake batches");
    const bool grad = disc_grads != nullptr;
    const auto real_pass = run_discriminator(model, disc_params, real, real_labels, grad);
    const auto fake_pass = run_discriminator(model, disc_params, fake, fake_labels, grad);
    const double nr = static_cast<double>(real_labels.size());
    const double nf = static_cast<double>(fake_labels.size());

    double loss = 0.0;
    Vector d_real(real_pass.prob.size()), d_fake(fake_pass.prob.size());
    for (Eigen::Index b = 0; b < real_pass.prob.size(); ++b) {
        loss += nn::bce(real_pass.prob(b), 1.0) / nr;
        d_real(b) = nn::bce_grad(real_pass.prob(b), 1.0) / nr;
    }
    for (Eigen::Index b = 0; b < fake_pass.prob.size(); ++b) {
        loss += nn::bce(fake_pass.prob(b), 0.0) / nf;
        d_fake(b) = nn::bce_grad(fake_pass.prob(b), 0.0) / nf;
    }
    if (grad) {
        disc_grads->set_zero();
        backprop_discriminator(model, disc_params, real_pass, d_real, real_labels, *disc_grads);
        backprop_discriminator(model, disc_params, fake_pass, d_fake, fake_labels, *disc_grads);
    }
    return loss;
}

GeneratorLoss generator_loss(const GanModel& model, const ParamSet& gen_params, const std::vector<Matrix>& noise,
                             std::span<const double> labels, const std::vector<Matrix>& paired, ParamSet* gen_grads)
{
    const auto& cfg = model.config();
    const auto batch = labels.size();
    if (batch == 0)
        throw ArgumentError("generator loss needs a non-empty batch");
    require_blocks(paired, cfg.seq_len, cfg.latent, batch, "paired real embeddings");
    const bool grad = gen_grads != nullptr;

    const auto gen_pass = run_generator(model, gen_params, noise, labels, grad);
    const auto fake = split_steps(gen_pass.latent, cfg.seq_len);
    const auto disc_pass = run_discriminator(model, model.discriminator(), fake, labels, grad);

    const double nb = static_cast<double>(batch);
    GeneratorLoss out;
    Vector d_prob(static_cast<Eigen::Index>(batch));
    for (std::size_t b = 0; b < batch; ++b) {
        const auto i = static_cast<Eigen::Index>(b);
        out.adversarial += nn::bce(disc_pass.prob(i), 1.0) / nb;
        d_prob(i) = nn::bce_grad(disc_pass.prob(i), 1.0) / nb;
    }
    const Matrix diff = gen_pass.latent - join_steps(paired);  // E x (N*B), step-major
    Vector norms = Vector::Zero(static_cast<Eigen::Index>(batch));
    for (std::size_t t = 0; t < cfg.seq_len; ++t)
        norms += diff.middleCols(static_cast<Eigen::Index>(t * batch), static_cast<Eigen::Index>(batch))
                     .colwise()
                     .squaredNorm()
                     .transpose();
    norms = norms.array().sqrt().matrix();
    out.l2 = norms.mean();
    out.total = out.adversarial + cfg.lambda * out.l2;
    if (!grad)
        return out;

    gen_grads->set_zero();
    ParamSet scratch = model.discriminator().zeros_like();
    Matrix d_latent =
        join_steps(backprop_discriminator(model, model.discriminator(), disc_pass, d_prob, labels, scratch));
    for (std::size_t b = 0; b < batch; ++b) {
        const double n = norms(static_cast<Eigen::Index>(b));
        if (n <= 0.0)
            continue;
        const double scale = cfg.lambda / (nb * n);
        for (std::size_t t = 0; t < cfg.seq_len; ++t) {
            const auto col = static_cast<Eigen::Index>(t * batch + b);
            d_latent.col(col) += scale * diff.col(col);
        }
    }
    backprop_generator(model, gen_params, gen_pass, d_latent, labels, *gen_grads);
    return out;
}

std::vector<std::size_t> pair_same_class(std::span<const double> real_labels, std::span<const double> fake_labels,
                                         Rng& rng)
{
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < real_labels.size(); ++i)
        by_class[real_labels[i] >= 0.5 ? 1 : 0].push_back(i);
    std::vector<std::size_t> out(fake_labels.size());
    for (std::size_t b = 0; b < fake_labels.size(); ++b) {
        const auto& pool = by_class[fake_labels[b] >= 0.5 ? 1 : 0];
        if (pool.empty())
            throw ArgumentError(std::string("batch has no real sample of class ") +
                                (fake_labels[b] >= 0.5 ? "Careful" : "NotCareful") + " to pair with");
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        out[b] = pool[pick(rng)];
    }
    return out;
}

namespace {

std::vector<Matrix> noise_blocks(std::span<const NoiseSequence> noise, std::size_t steps)
{
    std::vector<Matrix> blocks(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        blocks[t].resize(noise.front().steps.rows(), static_cast<Eigen::Index>(noise.size()));
        for (std::size_t b = 0; b < noise.size(); ++b)
            blocks[t].col(static_cast<Eigen::Index>(b)) = noise[b].steps.col(static_cast<Eigen::Index>(t));
    }
    return blocks;
}

}  // namespace

GanLosses gan_losses(const GanModel& model, std::span<const LatentSequence> real_latents,
                     std::span<const double> real_labels, std::span<const NoiseSequence> noise,
                     std::span<const double> labels, Rng& pairing_rng)
{
    if (real_latents.size() != real_labels.size() || noise.size() != labels.size())
        throw ArgumentError("gan_losses: batches and labels are not aligned");
    if (real_latents.empty() || noise.empty())
        throw ArgumentError("gan_losses: empty batch");
    std::vector<std::size_t> all(real_latents.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto real_blocks = ae::stack(real_latents, all);
    const auto pairing = pair_same_class(real_labels, labels, pairing_rng);
    const auto paired = ae::stack(real_latents, pairing);
    const auto z = noise_blocks(noise, model.config().seq_len);

    const auto fake = generate_batch(model, model.generator(), z, labels);
    GanLosses out;
    out.d_loss = discriminator_loss(model, model.discriminator(), real_blocks, real_labels, fake, labels, nullptr);
    const auto g = generator_loss(model, model.generator(), z, labels, paired, nullptr);
    out.g_loss = g.total;
    out.l2_term = g.l2;
    return out;
}

void require_compatible(const GanModel& gan, const ae::AutoencoderModel& autoencoder)
{
    if (gan.config().latent != autoencoder.config().latent)
        throw ConfigError("latent width mismatch: GAN produces " + std::to_string(gan.config().latent) +
                          "-dim embeddings, autoencoder expects " + std::to_string(autoencoder.config().latent));
    if (gan.config().seq_len != autoencoder.config().seq_len)
        throw ConfigError("sequence length mismatch: GAN uses " + std::to_string(gan.config().seq_len) +
                          " steps, autoencoder uses " + std::to_string(autoencoder.config().seq_len));
}

GanTrainResult train_gan(const data::ProfileCorpus& corpus, const ae::AutoencoderModel& autoencoder,
                         const GanConfig& cfg_in, const GanTrainConfig& train, std::uint64_t seed)
{
    if (train.epochs == 0)
        throw ArgumentError("GAN training needs at least one epoch");
    if (train.batch < 2)
        throw ArgumentError("GAN batch size must be at least 2");
    if (corpus.train.empty())
        throw ArgumentError("cannot train a GAN on an empty corpus");

    std::vector<double> labels;
    std::array<double, 2> duration_sum{0.0, 0.0};
    std::array<std::size_t, 2> class_count{0, 0};
    for (auto i : corpus.train) {
        const auto& p = corpus.profiles[i];
        if (!p.label)
            throw ArgumentError("GAN training requires every training profile to carry a label");
        const auto code = static_cast<std::size_t>(*p.label);
        labels.push_back(static_cast<double>(code));
        duration_sum[code] += p.duration();
        ++class_count[code];
    }
    if (class_count[0] == 0 || class_count[1] == 0)
        throw ArgumentError("GAN training requires both carefulness classes in the training split");

    GanConfig cfg = cfg_in;
    cfg.seq_len = autoencoder.config().seq_len;
    if (cfg_in.latent != autoencoder.config().latent)
        throw ConfigError("latent width mismatch: GAN config asks for " + std::to_string(cfg_in.latent) +
                          ", autoencoder provides " + std::to_string(autoencoder.config().latent));
    for (std::size_t c = 0; c < 2; ++c)
        cfg.class_dt[c] = duration_sum[c] / static_cast<double>(class_count[c]) / static_cast<double>(cfg.seq_len - 1);

    auto init_rng = make_rng(seed, "gan-init");
    GanTrainResult result{GanModel(cfg, &init_rng), {}};
    auto& model = result.model;

    // Real embeddings come from the frozen encoder, computed once.
    std::vector<std::vector<double>> rows;
    rows.reserve(corpus.train.size());
    for (auto i : corpus.train)
        rows.push_back(data::network_input(corpus.profiles[i], cfg.seq_len, autoencoder.normalization()));
    const auto real = ae::unstack(ae::encode_batch(autoencoder, ae::to_columns(rows, cfg.seq_len)));

    auto shuffle_rng = make_rng(seed, "gan-shuffle");
    auto noise_rng = make_rng(seed, "gan-noise");
    auto pair_rng = make_rng(seed, "gan-pair");
    std::normal_distribution<double> gauss(0.0, 1.0);

    auto adam_g = nn::AdamState::for_params(model.generator());
    auto adam_d = nn::AdamState::for_params(model.discriminator());
    ParamSet grad_g = model.generator().zeros_like();
    ParamSet grad_d = model.discriminator().zeros_like();

    std::vector<std::size_t> order(real.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        GanEpoch rec{epoch, 0.0, 0.0, 0.0};
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += train.batch) {
            const auto width = std::min(train.batch, order.size() - start);
            const std::span<const std::size_t> idx(order.data() + start, width);
            std::vector<double> batch_labels(width);
            for (std::size_t b = 0; b < width; ++b)
                batch_labels[b] = labels[idx[b]];

            const auto real_blocks = ae::stack(real, idx);
            std::vector<Matrix> z(cfg.seq_len, Matrix(static_cast<Eigen::Index>(cfg.noise),
                                                      static_cast<Eigen::Index>(width)));
            for (auto& block : z)
                for (Eigen::Index c = 0; c < block.cols(); ++c)
                    for (Eigen::Index r = 0; r < block.rows(); ++r)
                        block(r, c) = gauss(noise_rng);
            const auto pairing = pair_same_class(batch_labels, batch_labels, pair_rng);
            std::vector<std::size_t> paired_idx(width);
            for (std::size_t b = 0; b < width; ++b)
                paired_idx[b] = idx[pairing[b]];
            const auto paired = ae::stack(real, paired_idx);

            const auto fake = generate_batch(model, model.generator(), z, batch_labels);
            const double d_loss = discriminator_loss(model, model.discriminator(), real_blocks, batch_labels, fake,
                                                     batch_labels, &grad_d);
            nn::adam_step(model.discriminator(), grad_d, adam_d, train.adam);

            const auto g = generator_loss(model, model.generator(), z, batch_labels, paired, &grad_g);
            nn::adam_step(model.generator(), grad_g, adam_g, train.adam);

            if (!std::isfinite(d_loss) || !std::isfinite(g.total))
                throw NumericalError("GAN loss became non-finite at epoch " + std::to_string(epoch));
            rec.d_loss += d_loss;
            rec.g_loss += g.total;
            rec.l2_term += g.l2;
            ++batches;
        }
        rec.d_loss /= static_cast<double>(batches);
        rec.g_loss /= static_cast<double>(batches);
        rec.l2_term /= static_cast<double>(batches);
        result.history.push_back(rec);
    }
    return result;
}

std::vector<data::VelocityProfile> synthesize(const GanModel& gan, const ae::AutoencoderModel& autoencoder,
                                              data::CarefulnessClass label, std::size_t n, std::uint64_t seed,
                                              const data::NormStats& stats)
{
    require_compatible(gan, autoencoder);
    stats.validate();
    const auto& cfg = gan.config();
    const double code = static_cast<double>(label);
    auto rng = make_rng(seed, "synthesize", static_cast<std::uint64_t>(label));

    std::vector<data::VelocityProfile> out;
    out.reserve(n);
    constexpr std::size_t chunk = 256;
    for (std::size_t start = 0; start < n; start += chunk) {
        const auto width = std::min(chunk, n - start);
        std::vector<NoiseSequence> z;
        z.reserve(width);
        for (std::size_t b = 0; b < width; ++b)
            z.push_back(sample_noise(cfg.noise, cfg.seq_len, rng));
        const std::vector<double> labels(width, code);
        const auto latents = generate_batch(gan, gan.generator(), noise_blocks(z, cfg.seq_len), labels);
        const Matrix decoded = ae::decode_batch(autoencoder, latents);  // N x width
        for (std::size_t b = 0; b < width; ++b) {
            data::VelocityProfile p;
            p.dt = cfg.class_dt[static_cast<std::size_t>(label)];
            p.label = label;
            p.samples.resize(cfg.seq_len);
            const double span = stats.max - stats.min;
            for (std::size_t t = 0; t < cfg.seq_len; ++t)
                p.samples[t] = std::max(
                    0.0, decoded(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(b)) * span + stats.min);
            out.push_back(std::move(p));
        }
    }
    return out;
}

nn::Checkpoint to_checkpoint(const GanModel& model)
{
    const auto& c = model.config();
    nn::Checkpoint ckpt;
    ckpt.model_kind = "cgan";
    ckpt.config = {{"seq_len", c.seq_len},       {"noise", c.noise},
                   {"latent", c.latent},         {"gen_hidden", c.gen_hidden},
                   {"disc_hidden", c.disc_hidden}, {"lambda", c.lambda},
                   {"class_dt", c.class_dt},     {"label_codes", {{"NotCareful", 0}, {"Careful", 1}}}};
    for (const auto& a : model.generator().arrays())
        ckpt.params.add(a.name, a.shape).values = a.values;
    for (const auto& a : model.discriminator().arrays())
        ckpt.params.add(a.name, a.shape).values = a.values;
    return ckpt;
}

GanModel from_checkpoint(const nn::Checkpoint& ckpt)
{
    if (ckpt.model_kind != "cgan")
        throw ParseError("checkpoint model_kind is '" + ckpt.model_kind + "', expected 'cgan'");
    GanConfig cfg;
    try {
        cfg.seq_len = ckpt.config.at("seq_len").get<std::size_t>();
        cfg.noise = ckpt.config.at("noise").get<std::size_t>();
        cfg.latent = ckpt.config.at("latent").get<std::size_t>();
        cfg.gen_hidden = ckpt.config.at("gen_hidden").get<std::size_t>();
        cfg.disc_hidden = ckpt.config.at("disc_hidden").get<std::size_t>();
        cfg.lambda = ckpt.config.at("lambda").get<double>();
        cfg.class_dt = ckpt.config.at("class_dt").get<std::array<double, 2>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("cgan checkpoint config: ") + e.what());
    }
    GanModel model(cfg);
    for (auto* set : {&model.generator(), &model.discriminator()}) {
        for (auto& a : set->arrays()) {
            if (!ckpt.params.contains(a.name))
                throw ParseError("cgan checkpoint is missing array '" + a.name + "'");
            const auto& src = ckpt.params.at(a.name);
            if (src.shape != a.shape)
                throw ParseError("cgan checkpoint array '" + a.name + "' has an unexpected shape");
            a.values = src.values;
        }
    }
    if (ckpt.params.size() != model.generator().size() + model.discriminator().size())
        throw ParseError("cgan checkpoint contains unexpected arrays");
    return model;
}

void save_model(const GanModel& model, const std::filesystem::path& path)
{
    nn::save_checkpoint(to_checkpoint(model), path);
}

GanModel load_model(const std::filesystem::path& path)
{
    return from_checkpoint(nn::load_checkpoint(path));
}

void write_training_log(std::span<const GanEpoch> history, const std::filesystem::path& path)
{
    std::string out = "epoch,d_loss,g_loss,l2_term\n";
    for (const auto& e : history)
        out += std::to_string(e.epoch) + "," + text::format_double(e.d_loss) + "," + text::format_double(e.g_loss) +
               "," + text::format_double(e.l2_term) + "\n";
    text::write_file(path, out);
}

}  // namespace kinegen::gan
