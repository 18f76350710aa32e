#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "nst/autodiff.hpp"
#include "nst/tensor.hpp"

namespace nst {

enum class ModelKind { vgg_desk, nin_desk };

const char* model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);  // ConfigError on unknown kind

struct LayerSpec {
    enum class Type { conv, relu, pool };
    Type type = Type::relu;
    ConvParams conv;            // type == conv
    int pool_k = 0, pool_s = 0; // type == pool
    std::string tap;            // empty when the layer is not a tap point
};

inline constexpr std::array<const char*, 4> kTapLabels = {"tap1", "tap2", "tap3", "tap4"};

struct ModelSpec {
    ModelKind kind = ModelKind::vgg_desk;
    int input_channels = 3;
    std::vector<LayerSpec> layers;

    int conv_count() const;
    std::vector<std::string> tap_labels() const;

    // (c, h, w) after every layer for a square s x s input; element 0 is
    // the input itself. GeometryError when any layer cannot accept its
    // input size.
    std::vector<std::array<std::int64_t, 3>> shape_trace(std::int64_t s) const;
};

ModelSpec build_model(ModelKind kind);

template <class T>
using WeightMap = std::map<int, std::pair<TensorT<T>, TensorT<T>>>;  // layer idx -> (w, b)

struct WeightStore {
    ModelKind kind = ModelKind::vgg_desk;
    std::uint64_t seed = 0;  // creation seed; not persisted in the file format
    WeightMap<float> entries;
};

// He-uniform init (bound sqrt(6 / fan_in)) from a deterministic seeded
// generator; biases zero.
WeightStore init_weights(const ModelSpec& spec, std::uint64_t seed);

void save_weights(const WeightStore& store, const std::string& path);
WeightStore load_weights(const std::string& path);

void check_weights(const ModelSpec& spec, const WeightStore& store);  // ShapeError on mismatch

template <class T>
WeightMap<T> weight_map_as(const WeightStore& store) {
    WeightMap<T> out;
    for (const auto& [idx, wb] : store.entries)
        out.emplace(idx, std::make_pair(wb.first.template cast<T>(), wb.second.template cast<T>()));
    return out;
}

template <>
inline WeightMap<float> weight_map_as<float>(const WeightStore& store) {
    return store.entries;
}

template <class T>
using FeatureSetT = std::map<std::string, TensorT<T>>;
using FeatureSet = FeatureSetT<float>;

// Records the full forward pass on the tape starting from an existing
// image variable; returns the tap-label -> variable map.
template <class T>
std::map<std::string, VarId> forward_record(const ModelSpec& spec, const WeightMap<T>& weights,
                                            TapeT<T>& tape, VarId image, Backend backend) {
    std::map<std::string, VarId> taps;
    VarId cur = image;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& layer = spec.layers[i];
        switch (layer.type) {
            case LayerSpec::Type::conv: {
                auto it = weights.find(static_cast<int>(i));
                if (it == weights.end())
                    throw ShapeError("no weights for conv layer " + std::to_string(i));
                VarId w = tape.leaf(it->second.first);
                VarId b = tape.leaf(it->second.second);
                cur = tape.conv2d(cur, w, b, layer.conv, backend);
                break;
            }
            case LayerSpec::Type::relu:
                cur = tape.relu(cur);
                break;
            case LayerSpec::Type::pool:
                cur = tape.avg_pool(cur, layer.pool_k, layer.pool_s);
                break;
        }
        if (!layer.tap.empty()) taps[layer.tap] = cur;
    }
    return taps;
}

// Plain forward pass collecting activations at the four tap layers.
// When a tape is supplied the pass is recorded on it (image as a
// non-gradient leaf); otherwise a throwaway tape is used.
template <class T>
FeatureSetT<T> forward_features(const ModelSpec& spec, const WeightMap<T>& weights,
                                const TensorT<T>& image, Backend backend,
                                TapeT<T>* tape = nullptr) {
    if (image.n() != 1 || image.c() != spec.input_channels)
        throw GeometryError("model input must be (1," + std::to_string(spec.input_channels) +
                            ",s,s), got " + image.shape_str());
    FeatureSetT<T> out;
    auto collect = [&](TapeT<T>& t) {
        VarId img = t.leaf(image);
        auto taps = forward_record(spec, weights, t, img, backend);
        for (const auto& [label, id] : taps) out.emplace(label, t.value(id));
    };
    if (tape) {
        collect(*tape);
    } else {
        TapeT<T> local;
        collect(local);
    }
    return out;
}

inline FeatureSet forward_features(const ModelSpec& spec, const WeightStore& store,
                                   const Tensor& image, Backend backend, Tape* tape = nullptr) {
    return forward_features<float>(spec, store.entries, image, backend, tape);
}

}  // namespace nst
