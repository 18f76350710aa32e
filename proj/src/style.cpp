#include "nst/style.hpp"

#include <chrono>
#include <cmath>

#include "nst/image_io.hpp"

namespace nst {

void StyleConfig::validate() const {
    if (content_weight < 0 || style_weight < 0)
        throw ConfigError("content/style weights must be >= 0");
    if (content_weight + style_weight <= 0)
        throw ConfigError("content_weight + style_weight must be > 0");
    double sum = 0.0;
    for (const auto& [label, w] : layer_weights) {
        if (w < 0) throw ConfigError("per-tap style weight for '" + label + "' must be >= 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw ConfigError("per-tap style weights must sum to 1, got " + std::to_string(sum));
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be > 0");
    if (snapshot_interval < 0) throw ConfigError("snapshot interval must be >= 0");
}

double total_loss(double content, double style, const StyleConfig& cfg) {
    return cfg.content_weight * content + cfg.style_weight * style;
}

TransferSession::TransferSession(const ModelSpec& spec, const WeightStore& weights,
                                 Tensor content_img, Tensor style_img, StyleConfig cfg,
                                 Backend backend)
    : spec_(spec), weights_(weights), cfg_(std::move(cfg)), backend_(backend) {
    cfg_.validate();
    check_weights(spec_, weights_);
    bool tap_ok = false;
    for (const auto& label : spec_.tap_labels())
        if (label == cfg_.content_tap) tap_ok = true;
    if (!tap_ok) throw ConfigError("content tap '" + cfg_.content_tap + "' is not a model tap");

    targets_ = compute_targets<float>(spec_, weights_.entries, content_img, style_img, cfg_,
                                      backend_);

    if (cfg_.init == StyleConfig::Init::content_image) {
        image_ = std::move(content_img);
    } else {
        image_ = Tensor(content_img.n(), content_img.c(), content_img.h(), content_img.w());
        Rng rng(cfg_.seed);
        for (std::size_t i = 0; i < image_.size(); ++i)
            image_[i] = static_cast<float>(rng.uniform());
    }
    adam_m_.assign(image_.size(), 0.0f);
    adam_v_.assign(image_.size(), 0.0f);
}

IterationRecord TransferSession::step() {
    const auto t0 = std::chrono::steady_clock::now();
    ++iteration_;

    IterationRecord rec;
    rec.iteration = iteration_;
    try {
        Tape tape;
        VarId img = tape.leaf(image_, /*requires_grad=*/true);
        auto obj = record_objective<float>(spec_, weights_.entries, tape, img, targets_, cfg_,
                                           backend_);

        rec.content_loss = obj.content_scale * tape.value(obj.content_mse)[0];
        rec.style_loss = 0.0;
        for (const auto& [var, scale] : obj.style_terms)
            rec.style_loss += scale * tape.value(var)[0];
        rec.total_loss = tape.value(obj.total)[0];
        if (!std::isfinite(rec.total_loss)) throw NumericError("non-finite total loss");

        auto grads = tape.backward(obj.total);
        const Tensor& g = Tape::grad_of(grads, img);

        // Adam on pixels, beta1=0.9, beta2=0.999, eps=1e-8
        const float lr = static_cast<float>(cfg_.learning_rate);
        const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
        const float bc1 = 1.0f - std::pow(b1, static_cast<float>(iteration_));
        const float bc2 = 1.0f - std::pow(b2, static_cast<float>(iteration_));
        for (std::size_t i = 0; i < image_.size(); ++i) {
            float gi = g[i];
            adam_m_[i] = b1 * adam_m_[i] + (1.0f - b1) * gi;
            adam_v_[i] = b2 * adam_v_[i] + (1.0f - b2) * gi * gi;
            float mhat = adam_m_[i] / bc1;
            float vhat = adam_v_[i] / bc2;
            image_[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at iteration " + std::to_string(iteration_));
    }

    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

Tensor TransferSession::emission_image() const {
    Tensor out = image_;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::min(1.0f, std::max(0.0f, out[i]));
    return out;
}

std::pair<Tensor, RunReport> run_transfer(const ModelSpec& spec, const WeightStore& weights,
                                          const Tensor& content_img, const Tensor& style_img,
                                          const StyleConfig& cfg, Backend backend,
                                          const std::string& snapshot_stem,
                                          const std::string& snapshot_ext,
                                          const ProgressSink& progress) {
    TransferSession session(spec, weights, content_img, style_img, cfg, backend);
    RunReport report;
    report.records.reserve(static_cast<std::size_t>(cfg.iterations));
    for (int it = 1; it <= cfg.iterations; ++it) {
        IterationRecord rec = session.step();
        report.records.push_back(rec);
        if (progress) progress(rec);
        if (cfg.snapshot_interval > 0 && it % cfg.snapshot_interval == 0) {
            std::string path;
            if (!snapshot_stem.empty()) {
                path = snapshot_stem + "_iter" + std::to_string(it) + "." + snapshot_ext;
                save_image(session.emission_image(), path);
            }
            report.snapshots.push_back(path);
        }
    }
    return {session.image(), std::move(report)};
}

}  // namespace nst
