#include "nst/models.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace nst {

const char* model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::vgg_desk: return "vgg-desk";
        case ModelKind::nin_desk: return "nin-desk";
    }
    return "?";
}

ModelKind parse_model_kind(const std::string& name) {
    if (name == "vgg-desk") return ModelKind::vgg_desk;
    if (name == "nin-desk") return ModelKind::nin_desk;
    throw ConfigError("unknown model kind '" + name + "' (expected vgg-desk or nin-desk)");
}

int ModelSpec::conv_count() const {
    int n = 0;
    for (const auto& l : layers)
        if (l.type == LayerSpec::Type::conv) ++n;
    return n;
}

std::vector<std::string> ModelSpec::tap_labels() const {
    std::vector<std::string> out;
    for (const auto& l : layers)
        if (!l.tap.empty()) out.push_back(l.tap);
    return out;
}

std::vector<std::array<std::int64_t, 3>> ModelSpec::shape_trace(std::int64_t s) const {
    std::vector<std::array<std::int64_t, 3>> trace;
    std::int64_t c = input_channels, h = s, w = s;
    trace.push_back({c, h, w});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        try {
            switch (l.type) {
                case LayerSpec::Type::conv:
                    if (c != l.conv.in_channels)
                        throw ShapeError("conv layer expects " +
                                         std::to_string(l.conv.in_channels) + " channels, got " +
                                         std::to_string(c));
                    h = l.conv.out_size(h);
                    w = l.conv.out_size(w);
                    c = l.conv.out_channels;
                    break;
                case LayerSpec::Type::relu:
                    break;
                case LayerSpec::Type::pool:
                    h = pool_out_size(h, l.pool_k, l.pool_s);
                    w = pool_out_size(w, l.pool_k, l.pool_s);
                    break;
            }
        } catch (const GeometryError& e) {
            throw GeometryError("layer " + std::to_string(i) + ": " + e.what());
        }
        trace.push_back({c, h, w});
    }
    return trace;
}

namespace {

LayerSpec conv3x3(int in_c, int out_c) {
    LayerSpec l;
    l.type = LayerSpec::Type::conv;
    l.conv = ConvParams{in_c, out_c, 3, 1, 1};
    return l;
}

LayerSpec conv1x1(int c) {
    LayerSpec l;
    l.type = LayerSpec::Type::conv;
    l.conv = ConvParams{c, c, 1, 1, 0};
    return l;
}

LayerSpec relu_layer(std::string tap = "") {
    LayerSpec l;
    l.type = LayerSpec::Type::relu;
    l.tap = std::move(tap);
    return l;
}

LayerSpec pool2x2() {
    LayerSpec l;
    l.type = LayerSpec::Type::pool;
    l.pool_k = 2;
    l.pool_s = 2;
    return l;
}

constexpr std::array<int, 4> kBlockChannels = {32, 64, 128, 256};

}  // namespace

ModelSpec build_model(ModelKind kind) {
    ModelSpec spec;
    spec.kind = kind;
    int in_c = spec.input_channels;
    for (int block = 0; block < 4; ++block) {
        int c = kBlockChannels[static_cast<std::size_t>(block)];
        std::string tap = kTapLabels[static_cast<std::size_t>(block)];
        if (kind == ModelKind::vgg_desk) {
            spec.layers.push_back(conv3x3(in_c, c));
            spec.layers.push_back(relu_layer());
            spec.layers.push_back(conv3x3(c, c));
            spec.layers.push_back(relu_layer(tap));
        } else {
            // mlpconv block: spatial conv followed by two 1x1 convs
            spec.layers.push_back(conv3x3(in_c, c));
            spec.layers.push_back(relu_layer());
            spec.layers.push_back(conv1x1(c));
            spec.layers.push_back(relu_layer());
            spec.layers.push_back(conv1x1(c));
            spec.layers.push_back(relu_layer(tap));
        }
        spec.layers.push_back(pool2x2());
        in_c = c;
    }
    return spec;
}

WeightStore init_weights(const ModelSpec& spec, std::uint64_t seed) {
    WeightStore store;
    store.kind = spec.kind;
    store.seed = seed;
    Rng rng(seed);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.type != LayerSpec::Type::conv) continue;
        const ConvParams& p = l.conv;
        double fan_in = static_cast<double>(p.in_channels) * p.kernel_size * p.kernel_size;
        double bound = std::sqrt(6.0 / fan_in);
        Tensor w(p.out_channels, p.in_channels, p.kernel_size, p.kernel_size);
        for (std::size_t j = 0; j < w.size(); ++j)
            w[j] = static_cast<float>(rng.uniform(-bound, bound));
        Tensor b(p.out_channels, 1, 1, 1, 0.0f);
        store.entries.emplace(static_cast<int>(i), std::make_pair(std::move(w), std::move(b)));
    }
    return store;
}

void check_weights(const ModelSpec& spec, const WeightStore& store) {
    if (store.kind != spec.kind)
        throw ShapeError(std::string("weight store is for ") + model_kind_name(store.kind) +
                         ", model is " + model_kind_name(spec.kind));
    int convs = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.type != LayerSpec::Type::conv) continue;
        ++convs;
        auto it = store.entries.find(static_cast<int>(i));
        if (it == store.entries.end())
            throw ShapeError("weight store has no entry for conv layer " + std::to_string(i));
        const auto& [w, b] = it->second;
        if (w.n() != l.conv.out_channels || w.c() != l.conv.in_channels ||
            w.h() != l.conv.kernel_size || w.w() != l.conv.kernel_size)
            throw ShapeError("weight shape " + w.shape_str() + " mismatches conv layer " +
                             std::to_string(i));
        if (b.size() != static_cast<std::size_t>(l.conv.out_channels))
            throw ShapeError("bias length mismatches conv layer " + std::to_string(i));
    }
    if (static_cast<int>(store.entries.size()) != convs)
        throw ShapeError("weight store has extra entries");
}

// --- weight file format ----------------------------------------------------
// little-endian: magic "NSWF", version u32 = 1, kind u8, layer count u32,
// then per conv layer: layer index u32, weight shape 4 x u32, weight f32
// data, bias length u32, bias f32 data. Trailing bytes are an error.

namespace {

constexpr char kMagic[4] = {'N', 'S', 'W', 'F'};
constexpr std::uint32_t kVersion = 1;

std::uint8_t kind_tag(ModelKind k) { return k == ModelKind::vgg_desk ? 0 : 1; }

ModelKind kind_from_tag(std::uint8_t tag, std::size_t offset) {
    if (tag == 0) return ModelKind::vgg_desk;
    if (tag == 1) return ModelKind::nin_desk;
    if (tag == 2)
        throw FormatError("custom model kind is not loadable (byte offset " +
                          std::to_string(offset) + ")");
    throw FormatError("unknown model kind tag " + std::to_string(tag) + " at byte offset " +
                      std::to_string(offset));
}

class Reader {
public:
    Reader(std::ifstream& in, const std::string& path) : in_(in), path_(path) {}

    void read(void* dst, std::size_t len, const std::string& what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(len));
        if (static_cast<std::size_t>(in_.gcount()) != len)
            throw FormatError(path_ + ": truncated while reading " + what + " at byte offset " +
                              std::to_string(offset_));
        offset_ += len;
    }

    std::uint32_t read_u32(const std::string& what) {
        std::uint32_t v = 0;
        read(&v, sizeof v, what);
        return v;
    }

    std::size_t offset() const { return offset_; }

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

private:
    std::ifstream& in_;
    std::string path_;
    std::size_t offset_ = 0;
};

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

void save_weights(const WeightStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    std::uint8_t tag = kind_tag(store.kind);
    out.write(reinterpret_cast<const char*>(&tag), 1);
    write_u32(out, static_cast<std::uint32_t>(store.entries.size()));
    for (const auto& [idx, wb] : store.entries) {
        const auto& [w, b] = wb;
        write_u32(out, static_cast<std::uint32_t>(idx));
        for (std::int64_t d : w.shape()) write_u32(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(w.data()),
                  static_cast<std::streamsize>(w.size() * sizeof(float)));
        write_u32(out, static_cast<std::uint32_t>(b.size()));
        out.write(reinterpret_cast<const char*>(b.data()),
                  static_cast<std::streamsize>(b.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

WeightStore load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    Reader r(in, path);

    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path + ": bad magic (expected NSWF) at byte offset 0");
    std::uint32_t version = r.read_u32("version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at byte offset 4");
    std::uint8_t tag = 0;
    r.read(&tag, 1, "kind tag");
    WeightStore store;
    store.kind = kind_from_tag(tag, r.offset() - 1);
    std::uint32_t count = r.read_u32("layer count");

    for (std::uint32_t layer = 0; layer < count; ++layer) {
        std::string ctx = "layer record " + std::to_string(layer);
        std::uint32_t idx;
        std::uint32_t shape[4];
        std::vector<float> wdata;
        try {
            idx = r.read_u32("layer index");
            for (auto& d : shape) d = r.read_u32("weight shape");
            std::size_t wlen = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2] * shape[3];
            if (wlen > (1u << 28))
                throw FormatError(path + ": implausible weight size in " + ctx +
                                  " at byte offset " + std::to_string(r.offset()));
            wdata.resize(wlen);
            r.read(wdata.data(), wlen * sizeof(float), "weight data");
            std::uint32_t blen = r.read_u32("bias length");
            std::vector<float> bdata(blen);
            r.read(bdata.data(), blen * sizeof(float), "bias data");
            Tensor w = Tensor::from_data(shape[0], shape[1], shape[2], shape[3], std::move(wdata));
            Tensor b = Tensor::from_data(static_cast<std::int64_t>(blen), 1, 1, 1,
                                         std::move(bdata));
            if (!store.entries.emplace(static_cast<int>(idx), std::make_pair(std::move(w),
                                                                             std::move(b)))
                     .second)
                throw FormatError(path + ": duplicate layer index " + std::to_string(idx));
        } catch (const FormatError& e) {
            throw FormatError(std::string(e.what()) + " (in " + ctx + ")");
        }
    }
    if (!r.at_eof())
        throw FormatError(path + ": trailing bytes after layer records at byte offset " +
                          std::to_string(r.offset()));

    // validate against the declared model kind
    try {
        check_weights(build_model(store.kind), store);
    } catch (const ShapeError& e) {
        throw FormatError(path + ": " + e.what());
    }
    return store;
}

}  // namespace nst
