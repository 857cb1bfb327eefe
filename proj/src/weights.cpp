#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "odi/model.hpp"

namespace odi {

namespace {

constexpr char kMagic[4] = {'O', 'D', 'I', 'W'};
constexpr uint32_t kVersion = 1;

struct LayerDesc {
    std::string name;
    std::vector<uint64_t> shape;
    const std::vector<double>* data = nullptr;
};

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
    put_u64(buf, std::bit_cast<uint64_t>(v));
}

class Reader {
public:
    explicit Reader(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("weights: cannot open " + path);
        buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        path_ = path;
    }

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    size_t remaining() const { return buf_.size() - pos_; }

private:
    void need(size_t n) const {
        if (pos_ + n > buf_.size())
            throw std::runtime_error("weights: truncated file " + path_);
    }
    std::string buf_;
    std::string path_;
    size_t pos_ = 0;
};

void write_file(const std::string& path, const std::string& kind, const std::vector<LayerDesc>& layers) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<uint32_t>(kind.size()));
    buf.append(kind);
    put_u32(buf, static_cast<uint32_t>(layers.size()));
    for (const LayerDesc& l : layers) {
        put_u32(buf, static_cast<uint32_t>(l.name.size()));
        buf.append(l.name);
        put_u32(buf, static_cast<uint32_t>(l.shape.size()));
        uint64_t count = 1;
        for (uint64_t d : l.shape) {
            put_u64(buf, d);
            count *= d;
        }
        if (count != l.data->size())
            throw std::logic_error("weights: shape does not match data for " + l.name);
    }
    for (const LayerDesc& l : layers)
        for (double v : *l.data) put_f64(buf, v);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("weights: cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("weights: write failed for " + path);
}

struct LoadedLayer {
    std::vector<uint64_t> shape;
    std::vector<double> data;
};

struct LoadedFile {
    std::string kind;
    std::vector<std::pair<std::string, LoadedLayer>> layers;

    const LoadedLayer& get(const std::string& name) const {
        for (const auto& [n, l] : layers)
            if (n == name) return l;
        throw std::runtime_error("weights: missing layer " + name);
    }
};

LoadedFile read_file(const std::string& path) {
    Reader r(path);
    if (r.str(4) != std::string(kMagic, 4))
        throw std::runtime_error("weights: bad magic in " + path);
    uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("weights: unsupported version in " + path);
    LoadedFile f;
    f.kind = r.str(r.u32());
    uint32_t nlayers = r.u32();
    std::vector<uint64_t> counts;
    for (uint32_t i = 0; i < nlayers; ++i) {
        std::string name = r.str(r.u32());
        uint32_t ndims = r.u32();
        LoadedLayer l;
        uint64_t count = 1;
        for (uint32_t d = 0; d < ndims; ++d) {
            l.shape.push_back(r.u64());
            count *= l.shape.back();
        }
        counts.push_back(count);
        f.layers.emplace_back(std::move(name), std::move(l));
    }
    uint64_t total = 0;
    for (uint64_t c : counts) total += c;
    if (r.remaining() != total * 8)
        throw std::runtime_error("weights: payload size mismatch in " + path);
    for (uint32_t i = 0; i < nlayers; ++i) {
        auto& data = f.layers[i].second.data;
        data.resize(counts[i]);
        for (uint64_t k = 0; k < counts[i]; ++k) data[k] = r.f64();
    }
    return f;
}

std::vector<LayerDesc> classifier_layers(const TinyCnn& m) {
    auto u = [](int v) { return static_cast<uint64_t>(v); };
    return {
        {"conv1_w", {u(m.c1), 3, 3, 3}, &m.w1},
        {"conv1_b", {u(m.c1)}, &m.b1},
        {"conv2_w", {u(m.c2), u(m.c1), 3, 3}, &m.w2},
        {"conv2_b", {u(m.c2)}, &m.b2},
        {"fc_w", {u(m.num_classes), u(m.c2)}, &m.wf},
        {"fc_b", {u(m.num_classes)}, &m.bf},
    };
}

TinyCnn classifier_from(const LoadedFile& f, const std::string& path) {
    const LoadedLayer& w1 = f.get("conv1_w");
    const LoadedLayer& w2 = f.get("conv2_w");
    const LoadedLayer& wf = f.get("fc_w");
    if (w1.shape.size() != 4 || w2.shape.size() != 4 || wf.shape.size() != 2)
        throw std::runtime_error("weights: unexpected layer ranks in " + path);
    TinyCnn m(static_cast<int>(w1.shape[0]), static_cast<int>(w2.shape[0]),
              static_cast<int>(wf.shape[0]));
    if (w2.shape[1] != w1.shape[0] || wf.shape[1] != w2.shape[0] || w1.shape[1] != 3)
        throw std::runtime_error("weights: inconsistent shapes in " + path);
    auto take = [&](const char* name, std::vector<double>& dst) {
        const LoadedLayer& l = f.get(name);
        if (l.data.size() != dst.size())
            throw std::runtime_error(std::string("weights: shape mismatch for ") + name + " in " + path);
        dst = l.data;
    };
    take("conv1_w", m.w1);
    take("conv1_b", m.b1);
    take("conv2_w", m.w2);
    take("conv2_b", m.b2);
    take("fc_w", m.wf);
    take("fc_b", m.bf);
    return m;
}

} // namespace

void save_weights(const std::string& path, const TinyCnn& model) {
    write_file(path, "tinycnn", classifier_layers(model));
}

void save_weights(const std::string& path, const TinyCnnEmbedding& model) {
    std::vector<LayerDesc> layers = classifier_layers(model.trunk);
    layers.push_back({"embed_w",
                      {static_cast<uint64_t>(model.embed_dim), static_cast<uint64_t>(model.trunk.c2)},
                      &model.we});
    layers.push_back({"embed_b", {static_cast<uint64_t>(model.embed_dim)}, &model.be});
    write_file(path, "tinycnn_embedding", layers);
}

TinyCnn load_classifier_weights(const std::string& path) {
    LoadedFile f = read_file(path);
    if (f.kind != "tinycnn")
        throw std::runtime_error("weights: " + path + " is not a classifier file (kind=" + f.kind + ")");
    return classifier_from(f, path);
}

TinyCnnEmbedding load_embedding_weights(const std::string& path) {
    LoadedFile f = read_file(path);
    if (f.kind != "tinycnn_embedding")
        throw std::runtime_error("weights: " + path + " is not an embedding file (kind=" + f.kind + ")");
    TinyCnnEmbedding e;
    e.trunk = classifier_from(f, path);
    const LoadedLayer& we = f.get("embed_w");
    if (we.shape.size() != 2 || we.shape[1] != static_cast<uint64_t>(e.trunk.c2))
        throw std::runtime_error("weights: bad embedding shape in " + path);
    e.embed_dim = static_cast<int>(we.shape[0]);
    e.we = we.data;
    const LoadedLayer& be = f.get("embed_b");
    if (be.data.size() != static_cast<size_t>(e.embed_dim))
        throw std::runtime_error("weights: bad embedding bias in " + path);
    e.be = be.data;
    return e;
}

} // namespace odi
