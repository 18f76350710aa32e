#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nst/models.hpp"

namespace nst {

template <class T>
using GramSetT = std::map<std::string, TensorT<T>>;  // tap label -> (1,1,C,C)
using GramSet = GramSetT<float>;

template <class T>
TensorT<T> gram(const TensorT<T>& features) {
    return gram_exec(features);
}

// Per-layer style term E_l = (1 / (4 C_l^2 M_l^2)) * sum((G - A)^2),
// M_l = H_l * W_l; total = sum over taps of w_l * E_l.
template <class T>
double style_loss(const GramSetT<T>& x_grams, const GramSetT<T>& target_grams,
                  const std::map<std::string, double>& layer_weights,
                  const std::map<std::string, std::int64_t>& layer_positions) {
    if (x_grams.size() != target_grams.size())
        throw ContractError("style_loss: gram sets have different tap sets");
    double total = 0.0;
    for (const auto& [label, g] : x_grams) {
        auto it = target_grams.find(label);
        if (it == target_grams.end())
            throw ContractError("style_loss: target grams missing tap '" + label + "'");
        const TensorT<T>& a = it->second;
        if (!g.same_shape(a))
            throw ContractError("style_loss: gram size mismatch at tap '" + label + "'");
        auto wit = layer_weights.find(label);
        auto mit = layer_positions.find(label);
        if (wit == layer_weights.end() || mit == layer_positions.end())
            throw ContractError("style_loss: missing weight or dims for tap '" + label + "'");
        const double c = static_cast<double>(g.h());
        const double m = static_cast<double>(mit->second);
        double sq = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double d = static_cast<double>(g[i]) - static_cast<double>(a[i]);
            sq += d * d;
        }
        total += wit->second * sq / (4.0 * c * c * m * m);
    }
    return total;
}

// 1/2 * sum((F - P)^2)
template <class T>
double content_loss(const TensorT<T>& x_feat, const TensorT<T>& target_feat) {
    if (!x_feat.same_shape(target_feat))
        throw ContractError("content_loss: feature shapes differ: " + x_feat.shape_str() +
                            " vs " + target_feat.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < x_feat.size(); ++i) {
        double d = static_cast<double>(x_feat[i]) - static_cast<double>(target_feat[i]);
        acc += d * d;
    }
    return 0.5 * acc;
}

struct StyleConfig {
    double content_weight = 1.0;   // alpha
    double style_weight = 1e3;     // beta
    std::map<std::string, double> layer_weights = {
        {"tap1", 0.25}, {"tap2", 0.25}, {"tap3", 0.25}, {"tap4", 0.25}};
    std::string content_tap = "tap3";
    int iterations = 500;
    double learning_rate = 0.05;
    enum class Init { content_image, noise };
    Init init = Init::content_image;
    int snapshot_interval = 0;  // 0 = no snapshots
    std::uint64_t seed = 0;

    void validate() const;  // ConfigError on violation
};

double total_loss(double content, double style, const StyleConfig& cfg);

struct IterationRecord {
    int iteration = 0;  // 1-based
    double content_loss = 0.0;
    double style_loss = 0.0;
    double total_loss = 0.0;
    double seconds = 0.0;  // wall clock for this iteration
};

struct RunReport {
    std::vector<IterationRecord> records;
    std::vector<std::string> snapshots;  // paths; empty string when not written to disk
};

// Constant targets of the objective, computed once per run.
template <class T>
struct ObjectiveTargets {
    TensorT<T> content_features;                       // at cfg.content_tap
    GramSetT<T> style_grams;                           // per tap
    std::map<std::string, std::int64_t> tap_positions; // M_l = H_l * W_l per tap
};

template <class T>
ObjectiveTargets<T> compute_targets(const ModelSpec& spec, const WeightMap<T>& weights,
                                    const TensorT<T>& content_img, const TensorT<T>& style_img,
                                    const StyleConfig& cfg, Backend backend) {
    if (!content_img.same_shape(style_img))
        throw ContractError("content and style images must share one resolution, got " +
                            content_img.shape_str() + " vs " + style_img.shape_str());
    ObjectiveTargets<T> targets;
    FeatureSetT<T> cfeat = forward_features(spec, weights, content_img, backend);
    auto it = cfeat.find(cfg.content_tap);
    if (it == cfeat.end())
        throw ConfigError("content tap '" + cfg.content_tap + "' is not a model tap");
    targets.content_features = it->second;
    FeatureSetT<T> sfeat = forward_features(spec, weights, style_img, backend);
    for (const auto& [label, f] : sfeat) {
        targets.style_grams.emplace(label, gram_exec(f));
        targets.tap_positions[label] = f.h() * f.w();
    }
    return targets;
}

// Records the full objective on the tape. Outputs the total-loss node
// plus the raw per-term mse nodes so the caller can split the report
// into content/style components.
template <class T>
struct RecordedObjective {
    VarId total;
    VarId content_mse;
    double content_scale = 0.0;  // content loss = content_scale * value(content_mse)
    std::vector<std::pair<VarId, double>> style_terms;  // style loss = sum(scale * mse)
};

template <class T>
RecordedObjective<T> record_objective(const ModelSpec& spec, const WeightMap<T>& weights,
                                      TapeT<T>& tape, VarId image,
                                      const ObjectiveTargets<T>& targets, const StyleConfig& cfg,
                                      Backend backend) {
    auto taps = forward_record(spec, weights, tape, image, backend);

    RecordedObjective<T> obj;
    std::vector<VarId> terms;
    std::vector<T> coeffs;

    auto cit = taps.find(cfg.content_tap);
    if (cit == taps.end())
        throw ConfigError("content tap '" + cfg.content_tap + "' is not a model tap");
    VarId ctarget = tape.leaf(targets.content_features);
    obj.content_mse = tape.mse(cit->second, ctarget);
    obj.content_scale = static_cast<double>(targets.content_features.size()) / 2.0;
    terms.push_back(obj.content_mse);
    coeffs.push_back(static_cast<T>(cfg.content_weight * obj.content_scale));

    for (const auto& [label, var] : taps) {
        VarId gm = tape.gram(var);
        auto ait = targets.style_grams.find(label);
        auto wit = cfg.layer_weights.find(label);
        auto mit = targets.tap_positions.find(label);
        if (ait == targets.style_grams.end() || wit == cfg.layer_weights.end() ||
            mit == targets.tap_positions.end())
            throw ContractError("objective: missing style target for tap '" + label + "'");
        VarId atarget = tape.leaf(ait->second);
        VarId term = tape.mse(gm, atarget);
        const double m = static_cast<double>(mit->second);
        // E_l = mse * C^2 / (4 C^2 M^2) = mse / (4 M^2)
        double scale = wit->second / (4.0 * m * m);
        obj.style_terms.emplace_back(term, scale);
        terms.push_back(term);
        coeffs.push_back(static_cast<T>(cfg.style_weight * scale));
    }
    obj.total = tape.weighted_sum(terms, coeffs);
    return obj;
}

// One style-transfer optimization: owns the pixel state, the cached
// targets and the Adam moments. step() is one iteration of the loop.
class TransferSession {
public:
    TransferSession(const ModelSpec& spec, const WeightStore& weights, Tensor content_img,
                    Tensor style_img, StyleConfig cfg, Backend backend);

    IterationRecord step();

    const Tensor& image() const { return image_; }
    Tensor emission_image() const;  // clamped to [0,1]
    int iterations_done() const { return iteration_; }

private:
    const ModelSpec& spec_;
    const WeightStore& weights_;
    StyleConfig cfg_;
    Backend backend_;
    ObjectiveTargets<float> targets_;
    Tensor image_;
    std::vector<float> adam_m_, adam_v_;
    int iteration_ = 0;
};

using ProgressSink = std::function<void(const IterationRecord&)>;

// Full loop of cfg.iterations steps with snapshotting. snapshot_stem
// selects the snapshot file name `<stem>_iter<N>.<ext>`; when empty the
// snapshot is counted in the report but no file is written.
std::pair<Tensor, RunReport> run_transfer(const ModelSpec& spec, const WeightStore& weights,
                                          const Tensor& content_img, const Tensor& style_img,
                                          const StyleConfig& cfg, Backend backend,
                                          const std::string& snapshot_stem = "",
                                          const std::string& snapshot_ext = "png",
                                          const ProgressSink& progress = {});

}  // namespace nst
