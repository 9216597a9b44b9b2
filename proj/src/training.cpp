#include "uierl/training.hpp"

#include <cmath>
#include <fstream>

namespace uierl::training {

namespace op = uierl::ops;

void TrainConfig::validate() const {
    if (learning_rate < 0) throw UsageError("train config: negative learning rate");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
        throw UsageError("train config: adam betas must be in [0,1)");
    if (lambda1 < 0 || lambda2 < 0 || lambda1 + lambda2 <= 0)
        throw UsageError("train config: loss weights must be non-negative with a positive sum");
    if (iterations < 0) throw UsageError("train config: negative iteration count");
    if (input_size < 8) throw UsageError("train config: input size too small");
}

template <typename T>
PerceptualExtractor<T> PerceptualExtractor<T>::make_fixed_random(std::uint64_t seed) {
    PerceptualExtractor<T> e;
    Rng rng(seed);
    const int chans[4] = {3, 16, 32, 64};
    for (int s = 0; s < 3; ++s) {
        const int cin = chans[s], cout = chans[s + 1];
        const double bound = std::sqrt(6.0 / (cin * 9.0));
        std::vector<T> w(static_cast<size_t>(cout) * cin * 9);
        for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
        e.ws.push_back(Tensor<T>::from({cout, cin, 3, 3}, std::move(w)));
        e.bs.push_back(Tensor<T>::zeros({cout}));
    }
    return e;
}

template <typename T>
PerceptualExtractor<T> PerceptualExtractor<T>::make(const std::string& id, std::uint64_t seed) {
    if (id == "fixed_random_pyramid") return make_fixed_random(seed);
    if (id == "external_pretrained")
        throw UsageError("perceptual extractor 'external_pretrained' must be supplied through the "
                         "PerceptualExtractor::custom hook");
    throw UsageError("unknown perceptual extractor '" + id + "'");
}

template <typename T>
Tensor<T> PerceptualExtractor<T>::forward(const Tensor<T>& img) const {
    if (custom) return custom(img);
    Tensor<T> x = img;
    for (size_t s = 0; s < ws.size(); ++s)
        x = op::relu(op::conv2d(x, ws[s], bs[s], /*stride=*/2));
    return x;
}

template <typename T>
Tensor<T> content_loss(const std::vector<Tensor<T>>& outputs, const std::vector<Tensor<T>>& refs) {
    if (outputs.size() != refs.size() || outputs.empty())
        throw UsageError("content_loss: output/reference lists of sizes " +
                         std::to_string(outputs.size()) + " vs " + std::to_string(refs.size()));
    Tensor<T> acc = op::l1(outputs[0], refs[0]);
    for (size_t i = 1; i < outputs.size(); ++i) acc = op::add(acc, op::l1(outputs[i], refs[i]));
    return outputs.size() == 1 ? acc : op::scale(acc, 1.0 / static_cast<double>(outputs.size()));
}

template <typename T>
Tensor<T> perceptual_loss(const std::vector<Tensor<T>>& outputs, const std::vector<Tensor<T>>& refs,
                          const PerceptualExtractor<T>& extractor) {
    if (outputs.size() != refs.size() || outputs.empty())
        throw UsageError("perceptual_loss: output/reference lists of sizes " +
                         std::to_string(outputs.size()) + " vs " + std::to_string(refs.size()));
    Tensor<T> acc;
    for (size_t i = 0; i < outputs.size(); ++i) {
        auto term = op::l2(extractor.forward(outputs[i]), extractor.forward(refs[i]));
        acc = acc.defined() ? op::add(acc, term) : term;
    }
    return outputs.size() == 1 ? acc : op::scale(acc, 1.0 / static_cast<double>(outputs.size()));
}

template <typename T>
Tensor<T> total_loss(const std::vector<Tensor<T>>& outputs, const std::vector<Tensor<T>>& refs,
                     const PerceptualExtractor<T>& extractor, double lambda1, double lambda2) {
    auto content = content_loss(outputs, refs);
    if (lambda2 == 0.0) return lambda1 == 1.0 ? content : op::scale(content, lambda1);
    auto perc = perceptual_loss(outputs, refs, extractor);
    return op::add(op::scale(content, lambda1), op::scale(perc, lambda2));
}

imaging::SceneBatch augment(const imaging::SceneBatch& batch, Rng& rng, bool hflip, bool rot90) {
    for (const auto& v : batch.views)
        if (!v.reference || !v.depth)
            throw UsageError("augment: scene '" + batch.scene_id +
                             "' is missing references or depth maps");
    const bool flip = hflip && rng.coin();
    int k = 0;
    if (rot90) {
        const bool square = batch.height() == batch.width();
        k = static_cast<int>(rng.uniform_int(4));
        if (!square && (k % 2) == 1) k = (k + 1) % 4; // quarter turns need square frames
    }
    imaging::SceneBatch out = batch;
    for (auto& v : out.views) {
        auto apply = [&](const imaging::Raster& r) {
            auto x = flip ? imaging::hflip(r) : r.clone();
            return k == 0 ? x : imaging::rot90(x, k);
        };
        v.degraded = apply(v.degraded);
        v.reference = apply(*v.reference);
        v.depth = apply(*v.depth);
    }
    return out;
}

template <typename T>
void Adam<T>::init(const ParamStore<T>& params) {
    m.assign(static_cast<size_t>(params.total_params()), 0.0);
    v.assign(static_cast<size_t>(params.total_params()), 0.0);
    t = 0;
}

template <typename T>
void Adam<T>::step(ParamStore<T>& params) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    size_t off = 0;
    for (const auto& [name, e] : params.entries()) {
        Tensor<T> p = e.tensor;
        const bool has_grad = p.has_grad();
        const std::int64_t n = p.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            const double g = has_grad ? static_cast<double>(p.grad()[static_cast<size_t>(i)]) : 0.0;
            double& mi = m[off + static_cast<size_t>(i)];
            double& vi = v[off + static_cast<size_t>(i)];
            mi = beta1 * mi + (1.0 - beta1) * g;
            vi = beta2 * vi + (1.0 - beta2) * g * g;
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p.data()[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
        }
        off += static_cast<size_t>(n);
    }
}

template <typename T>
TrainResult train(const std::vector<imaging::SceneBatch>& dataset, network::Model<T>& model,
                  const TrainConfig& config, const std::filesystem::path& checkpoint_path,
                  const std::string& run_config_json, const network::TrainStateBlob* resume,
                  const std::function<void(const LossRow&)>& on_iteration) {
    config.validate();
    if (dataset.empty()) throw DataError("train: empty dataset");
    for (const auto& scene : dataset) {
        scene.validate();
        if (!scene.has_references())
            throw DataError("train: scene '" + scene.scene_id + "' has no references");
    }

    auto extractor = PerceptualExtractor<T>::make(config.perceptual_extractor, config.seed);
    Rng rng(config.seed);
    Adam<T> adam;
    adam.lr = config.learning_rate;
    adam.beta1 = config.adam_beta1;
    adam.beta2 = config.adam_beta2;
    adam.eps = config.adam_eps;
    adam.init(model.params);

    std::int64_t start = 0;
    if (resume) {
        if (!resume->adam_m.empty()) {
            if (resume->adam_m.size() != adam.m.size())
                throw DataError("train: resume state sized for a different model");
            adam.m = resume->adam_m;
            adam.v = resume->adam_v;
            adam.t = resume->adam_step;
        }
        start = resume->iteration;
        rng.set_state(resume->rng_state);
    }

    auto snapshot_state = [&](std::int64_t iteration) {
        network::TrainStateBlob blob;
        blob.adam_m = adam.m;
        blob.adam_v = adam.v;
        blob.adam_step = adam.t;
        blob.iteration = iteration;
        blob.rng_state = rng.state();
        return blob;
    };

    TrainResult result;
    for (std::int64_t it = start; it < config.iterations; ++it) {
        const auto scene_idx = rng.uniform_int(dataset.size());
        auto batch = augment(dataset[static_cast<size_t>(scene_idx)], rng, config.aug_hflip,
                             config.aug_rot90);

        auto outputs = network::forward_scene(model, batch);
        std::vector<Tensor<T>> refs;
        for (const auto& view : batch.views) {
            auto net = imaging::to_network_range(*view.reference);
            std::vector<T> data(net.vec().size());
            for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(net.data()[i]);
            refs.push_back(Tensor<T>::from(net.shape(), std::move(data)));
        }

        auto content = content_loss(outputs, refs);
        Tensor<T> perc;
        Tensor<T> loss;
        if (config.lambda2 == 0.0) {
            loss = config.lambda1 == 1.0 ? content : op::scale(content, config.lambda1);
        } else {
            perc = perceptual_loss(outputs, refs, extractor);
            loss = op::add(op::scale(content, config.lambda1), op::scale(perc, config.lambda2));
        }

        LossRow row;
        row.iteration = it;
        row.content = static_cast<double>(content.item());
        row.perceptual = perc.defined() ? static_cast<double>(perc.item()) : 0.0;
        row.total = static_cast<double>(loss.item());
        if (!std::isfinite(row.total))
            throw NumericError("train: loss is not finite at iteration " + std::to_string(it));

        model.params.zero_grads();
        backward(loss);
        adam.step(model.params);
        model.params.zero_grads();

        result.history.push_back(row);
        ++result.iterations_run;
        if (on_iteration) on_iteration(row);

        const bool stop_early =
            config.early_stop_content > 0 && row.content < config.early_stop_content;
        const bool at_end = it + 1 == config.iterations || stop_early;
        if (!checkpoint_path.empty() &&
            (at_end || (config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0))) {
            auto blob = snapshot_state(it + 1);
            network::save_checkpoint(checkpoint_path, model, run_config_json, &blob);
        }
        if (stop_early) break;
    }
    result.state = snapshot_state(start + result.iterations_run);
    return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<LossRow>& history) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write loss history '" + path.string() + "'");
    f << "iteration,content,perceptual,total\n";
    char buf[160];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g\n",
                      static_cast<long long>(row.iteration), row.content, row.perceptual, row.total);
        f << buf;
    }
}

#define UIERL_TRAINING_INSTANTIATE(T)                                                              \
    template struct PerceptualExtractor<T>;                                                        \
    template struct Adam<T>;                                                                       \
    template Tensor<T> content_loss<T>(const std::vector<Tensor<T>>&,                              \
                                       const std::vector<Tensor<T>>&);                             \
    template Tensor<T> perceptual_loss<T>(const std::vector<Tensor<T>>&,                           \
                                          const std::vector<Tensor<T>>&,                           \
                                          const PerceptualExtractor<T>&);                          \
    template Tensor<T> total_loss<T>(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, \
                                     const PerceptualExtractor<T>&, double, double);               \
    template TrainResult train<T>(const std::vector<imaging::SceneBatch>&, network::Model<T>&,     \
                                  const TrainConfig&, const std::filesystem::path&,                \
                                  const std::string&, const network::TrainStateBlob*,              \
                                  const std::function<void(const LossRow&)>&);

UIERL_TRAINING_INSTANTIATE(float)
UIERL_TRAINING_INSTANTIATE(double)

} // namespace uierl::training
