#include "kinegen/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kinegen/errors.hpp"
#include "kinegen/text.hpp"

namespace kinegen::ae {

using nn::join_steps;
using nn::ParamSet;
using nn::split_steps;

AutoencoderModel::AutoencoderModel(const AutoencoderConfig& cfg, Rng* rng) : config_(cfg)
{
    if (cfg.seq_len < 2 || cfg.latent == 0 || cfg.hidden == 0)
        throw ConfigError("autoencoder config needs seq_len >= 2 and positive latent/hidden widths");
    const auto enc = encoder_cell();
    const auto enc_head = encoder_head();
    const auto dec = decoder_cell();
    const auto dec_head = decoder_head();
    enc.declare(params_);
    enc_head.declare(params_);
    dec.declare(params_);
    dec_head.declare(params_);
    if (rng) {
        enc.initialize(params_, *rng);
        enc_head.initialize(params_, *rng);
        dec.initialize(params_, *rng);
        dec_head.initialize(params_, *rng);
    }
}

void AutoencoderModel::check() const
{
    encoder_cell().check(params_);
    encoder_head().check(params_);
    decoder_cell().check(params_);
    decoder_head().check(params_);
}

namespace {

void require_input_rows(const AutoencoderModel& model, const Matrix& inputs)
{
    if (static_cast<std::size_t>(inputs.rows()) != model.config().seq_len)
        throw ShapeError("autoencoder expects sequences of length " + std::to_string(model.config().seq_len) +
                         ", got " + std::to_string(inputs.rows()));
}

std::vector<Matrix> input_steps(const Matrix& inputs)
{
    std::vector<Matrix> xs(static_cast<std::size_t>(inputs.rows()));
    for (Eigen::Index t = 0; t < inputs.rows(); ++t)
        xs[static_cast<std::size_t>(t)] = inputs.row(t);
    return xs;
}

std::vector<Matrix> encode_with(const AutoencoderModel& model, const ParamSet& params, const Matrix& inputs)
{
    const auto steps = model.config().seq_len;
    const auto hs = model.encoder_cell().forward(params, input_steps(inputs), nullptr);
    return split_steps(model.encoder_head().forward(params, join_steps(hs)), steps);
}

Matrix decode_with(const AutoencoderModel& model, const ParamSet& params, const std::vector<Matrix>& latents)
{
    const auto steps = model.config().seq_len;
    if (latents.size() != steps)
        throw ShapeError("decoder expects " + std::to_string(steps) + " latent steps, got " +
                         std::to_string(latents.size()));
    for (const auto& l : latents) {
        if (static_cast<std::size_t>(l.rows()) != model.config().latent)
            throw ShapeError("decoder expects latent width " + std::to_string(model.config().latent) + ", got " +
                             std::to_string(l.rows()));
    }
    const auto hs = model.decoder_cell().forward(params, latents, nullptr);
    const Matrix y = model.decoder_head().forward(params, join_steps(hs));  // 1 x (N*B)
    const Eigen::Index batch = latents.front().cols();
    Matrix out(static_cast<Eigen::Index>(steps), batch);
    for (std::size_t t = 0; t < steps; ++t)
        out.row(static_cast<Eigen::Index>(t)) = y.middleCols(static_cast<Eigen::Index>(t) * batch, batch);
    return out;
}

}  // namespace

std::vector<Matrix> encode_batch(const AutoencoderModel& model, const Matrix& inputs)
{
    require_input_rows(model, inputs);
    return encode_with(model, model.params(), inputs);
}

Matrix decode_batch(const AutoencoderModel& model, const std::vector<Matrix>& latents)
{
    return decode_with(model, model.params(), latents);
}

LatentSequence encode(const AutoencoderModel& model, std::span<const double> normalized)
{
    if (normalized.size() != model.config().seq_len)
        throw ShapeError("encode expects a profile of length " + std::to_string(model.config().seq_len) + ", got " +
                         std::to_string(normalized.size()));
    const Matrix col = Eigen::Map<const nn::Vector>(normalized.data(), static_cast<Eigen::Index>(normalized.size()));
    return unstack(encode_batch(model, col)).front();
}

LatentSequence encode(const AutoencoderModel& model, const data::VelocityProfile& normalized)
{
    return encode(model, std::span<const double>(normalized.samples));
}

std::vector<double> decode(const AutoencoderModel& model, const LatentSequence& latent)
{
    if (latent.length() != model.config().seq_len || latent.width() != model.config().latent)
        throw ShapeError("decode expects a " + std::to_string(model.config().latent) + " x " +
                         std::to_string(model.config().seq_len) + " latent, got " + std::to_string(latent.width()) +
                         " x " + std::to_string(latent.length()));
    const std::size_t which = 0;
    const Matrix y = decode_batch(model, stack(std::span<const LatentSequence>(&latent, 1), std::span(&which, 1)));
    return std::vector<double>(y.data(), y.data() + y.size());
}

std::vector<LatentSequence> unstack(const std::vector<Matrix>& blocks)
{
    if (blocks.empty())
        return {};
    const auto steps = static_cast<Eigen::Index>(blocks.size());
    const Eigen::Index width = blocks.front().rows();
    const Eigen::Index batch = blocks.front().cols();
    std::vector<LatentSequence> out(static_cast<std::size_t>(batch));
    for (Eigen::Index b = 0; b < batch; ++b) {
        auto& seq = out[static_cast<std::size_t>(b)].steps;
        seq.resize(width, steps);
        for (Eigen::Index t = 0; t < steps; ++t)
            seq.col(t) = blocks[static_cast<std::size_t>(t)].col(b);
    }
    return out;
}

std::vector<Matrix> stack(std::span<const LatentSequence> latents, std::span<const std::size_t> which)
{
    if (which.empty())
        return {};
    const auto& first = latents[which.front()].steps;
    const auto steps = static_cast<std::size_t>(first.cols());
    const auto batch = static_cast<Eigen::Index>(which.size());
    std::vector<Matrix> blocks(steps, Matrix(first.rows(), batch));
    for (Eigen::Index b = 0; b < batch; ++b) {
        const auto& seq = latents[which[static_cast<std::size_t>(b)]].steps;
        if (seq.rows() != first.rows() || static_cast<std::size_t>(seq.cols()) != steps)
            throw ShapeError("latent sequences in a batch must share one shape");
        for (std::size_t t = 0; t < steps; ++t)
            blocks[t].col(b) = seq.col(static_cast<Eigen::Index>(t));
    }
    return blocks;
}

double reconstruction_loss(const AutoencoderModel& model, const ParamSet& params, const Matrix& inputs,
                           ParamSet* grads)
{
    require_input_rows(model, inputs);
    const auto steps = model.config().seq_len;
    const auto enc = model.encoder_cell();
    const auto enc_head = model.encoder_head();
    const auto dec = model.decoder_cell();
    const auto dec_head = model.decoder_head();

    nn::LstmCache enc_cache, dec_cache;
    const auto xs = input_steps(inputs);
    const Matrix he = join_steps(enc.forward(params, xs, grads ? &enc_cache : nullptr));
    const Matrix lat = enc_head.forward(params, he);
    const auto lat_steps = split_steps(lat, steps);
    const Matrix hd = join_steps(dec.forward(params, lat_steps, grads ? &dec_cache : nullptr));
    const Matrix y = dec_head.forward(params, hd);
    const Matrix target = join_steps(xs);
    const Matrix diff = y - target;
    const double count = static_cast<double>(diff.size());
    const double loss = diff.squaredNorm() / count;
    if (!grads)
        return loss;

    grads->set_zero();
    const Matrix dy = diff * (2.0 / count);
    const Matrix dhd = dec_head.backward(params, hd, y, dy, *grads);
    const Matrix dlat = join_steps(dec.backward(params, dec_cache, split_steps(dhd, steps), *grads));
    const Matrix dhe = enc_head.backward(params, he, lat, dlat, *grads);
    enc.backward(params, enc_cache, split_steps(dhe, steps), *grads);
    return loss;
}

Matrix to_columns(std::span<const std::vector<double>> rows, std::size_t n)
{
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t b = 0; b < rows.size(); ++b) {
        if (rows[b].size() != n)
            throw ShapeError("profile " + std::to_string(b) + " has length " + std::to_string(rows[b].size()) +
                             ", expected " + std::to_string(n));
        m.col(static_cast<Eigen::Index>(b)) =
            Eigen::Map<const nn::Vector>(rows[b].data(), static_cast<Eigen::Index>(n));
    }
    return m;
}

namespace {

double mse_over(const AutoencoderModel& model, const Matrix& inputs)
{
    if (inputs.cols() == 0)
        return 0.0;
    constexpr Eigen::Index chunk = 256;
    double sum = 0.0;
    for (Eigen::Index start = 0; start < inputs.cols(); start += chunk) {
        const auto width = std::min(chunk, inputs.cols() - start);
        const Matrix block = inputs.middleCols(start, width);
        sum += reconstruction_loss(model, model.params(), block, nullptr) * static_cast<double>(block.size());
    }
    return sum / static_cast<double>(inputs.size());
}

}  // namespace

AeTrainResult train_autoencoder(const data::ProfileCorpus& corpus, const AutoencoderConfig& cfg,
                                const TrainConfig& train, std::uint64_t seed)
{
    if (corpus.profiles.empty() || corpus.train.empty())
        throw ArgumentError("cannot train an autoencoder on an empty corpus");
    if (train.epochs == 0)
        throw ArgumentError("autoencoder training needs at least one epoch");
    if (train.batch == 0)
        throw ArgumentError("batch size must be positive");

    auto init_rng = make_rng(seed, "ae-init");
    AeTrainResult result{AutoencoderModel(cfg, &init_rng), {}, 0};
    auto& model = result.model;
    model.set_normalization(corpus.normalization);

    auto inputs_for = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::vector<double>> rows;
        rows.reserve(idx.size());
        for (auto i : idx)
            rows.push_back(data::network_input(corpus.profiles[i], cfg.seq_len, corpus.normalization));
        return to_columns(rows, cfg.seq_len);
    };
    const Matrix train_inputs = inputs_for(corpus.train);
    const Matrix heldout_inputs = inputs_for(corpus.heldout);
    const bool has_heldout = heldout_inputs.cols() > 0;

    auto shuffle_rng = make_rng(seed, "ae-shuffle");
    auto adam = nn::AdamState::for_params(model.params());
    ParamSet grads = model.params().zeros_like();
    ParamSet best = model.params();
    double best_loss = std::numeric_limits<double>::infinity();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(train_inputs.cols()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto B = static_cast<Eigen::Index>(train.batch);
    Matrix batch;
    for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double weighted = 0.0;
        for (std::size_t start = 0; start < order.size(); start += train.batch) {
            const auto width = std::min<Eigen::Index>(B, static_cast<Eigen::Index>(order.size() - start));
            batch.resize(train_inputs.rows(), width);
            for (Eigen::Index b = 0; b < width; ++b)
                batch.col(b) = train_inputs.col(order[start + static_cast<std::size_t>(b)]);
            const double loss = reconstruction_loss(model, model.params(), batch, &grads);
            if (!std::isfinite(loss))
                throw NumericalError("autoencoder loss became non-finite at epoch " + std::to_string(epoch));
            nn::adam_step(model.params(), grads, adam, train.adam);
            weighted += loss * static_cast<double>(width);
        }
        AeEpoch rec{epoch, weighted / static_cast<double>(order.size()), 0.0};
        rec.heldout_mse = has_heldout ? mse_over(model, heldout_inputs) : rec.train_mse;
        if (!std::isfinite(rec.heldout_mse))
            throw NumericalError("autoencoder held-out loss became non-finite at epoch " + std::to_string(epoch));
        result.history.push_back(rec);
        if (rec.heldout_mse < best_loss) {
            best_loss = rec.heldout_mse;
            best = model.params();
            result.best_epoch = epoch;
        }
    }
    model.params() = std::move(best);
    return result;
}

double reconstruction_error(const AutoencoderModel& model, std::span<const std::vector<double>> profiles)
{
    if (profiles.empty())
        return 0.0;
    return std::sqrt(mse_over(model, to_columns(profiles, model.config().seq_len)));
}

nn::Checkpoint to_checkpoint(const AutoencoderModel& model)
{
    nn::Checkpoint ckpt;
    ckpt.model_kind = "autoencoder";
    ckpt.config = {{"seq_len", model.config().seq_len},
                   {"latent", model.config().latent},
                   {"hidden", model.config().hidden},
                   {"normalization", {{"min", model.normalization().min}, {"max", model.normalization().max}}}};
    ckpt.params = model.params();
    return ckpt;
}

AutoencoderModel from_checkpoint(const nn::Checkpoint& ckpt)
{
    if (ckpt.model_kind != "autoencoder")
        throw ParseError("checkpoint model_kind is '" + ckpt.model_kind + "', expected 'autoencoder'");
    AutoencoderConfig cfg;
    data::NormStats norm;
    try {
        cfg.seq_len = ckpt.config.at("seq_len").get<std::size_t>();
        cfg.latent = ckpt.config.at("latent").get<std::size_t>();
        cfg.hidden = ckpt.config.at("hidden").get<std::size_t>();
        norm.min = ckpt.config.at("normalization").at("min").get<double>();
        norm.max = ckpt.config.at("normalization").at("max").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("autoencoder checkpoint config: ") + e.what());
    }
    AutoencoderModel model(cfg);
    model.params().require_same_layout(ckpt.params, "autoencoder checkpoint");
    model.params() = ckpt.params;
    model.set_normalization(norm);
    return model;
}

void save_model(const AutoencoderModel& model, const std::filesystem::path& path)
{
    nn::save_checkpoint(to_checkpoint(model), path);
}

AutoencoderModel load_model(const std::filesystem::path& path)
{
    return from_checkpoint(nn::load_checkpoint(path));
}

void write_training_log(std::span<const AeEpoch> history, const std::filesystem::path& path)
{
    std::string out = "epoch,train_mse,heldout_mse\n";
    for (const auto& e : history)
        out += std::to_string(e.epoch) + "," + text::format_double(e.train_mse) + "," +
               text::format_double(e.heldout_mse) + "\n";
    text::write_file(path, out);
}

}  // namespace kinegen::ae
