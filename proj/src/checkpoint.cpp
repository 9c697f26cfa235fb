#include "hadamix/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "hadamix/errors.hpp"

namespace hadamix {

namespace {

constexpr char kMagic[4] = {'H', 'M', 'I', 'X'};

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw IoError("checkpoint truncated: " + path);
    }
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        throw IoError("checkpoint truncated: " + path);
    }
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

Tensor tensor_with_extents(const std::vector<int64_t>& ext) {
    switch (ext.size()) {
        case 1: return Tensor({ext[0]});
        case 2: return Tensor({ext[0], ext[1]});
        case 3: return Tensor({ext[0], ext[1], ext[2]});
        default: break;
    }
    throw IoError("checkpoint tensor rank out of range");
}

}  // namespace

const std::string* CheckpointData::find_key(const std::string& key) const {
    for (const auto& [k, v] : config) {
        if (k == key) return &v;
    }
    return nullptr;
}

const Tensor* CheckpointData::find_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

std::string kv_emit(const std::vector<std::pair<std::string, std::string>>& kvs) {
    std::string out;
    for (const auto& [k, v] : kvs) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> kv_parse(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw IoError("malformed key=value line: " + line);
        }
        out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return out;
}

void write_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kCheckpointVersion);
    const std::string cfg = kv_emit(data.config);
    write_u32(os, uint32_t(cfg.size()));
    os.write(cfg.data(), std::streamsize(cfg.size()));
    write_u32(os, uint32_t(data.tensors.size()));
    for (const auto& [name, t] : data.tensors) {
        write_u32(os, uint32_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        write_u32(os, uint32_t(t.rank()));
        for (int a = 0; a < t.rank(); ++a) write_u64(os, uint64_t(t.extent(a)));
        static_assert(sizeof(float) == 4);
        os.write(reinterpret_cast<const char*>(t.data()),
                 std::streamsize(t.numel() * 4));
    }
    if (!os) throw IoError("write failed: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("not a checkpoint file: " + path);
    }
    const uint32_t version = read_u32(is, path);
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    }
    CheckpointData data;
    const uint32_t cfg_len = read_u32(is, path);
    std::string cfg(cfg_len, '\0');
    if (cfg_len && !is.read(cfg.data(), cfg_len)) {
        throw IoError("checkpoint truncated: " + path);
    }
    data.config = kv_parse(cfg);
    const uint32_t n_tensors = read_u32(is, path);
    data.tensors.reserve(n_tensors);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const uint32_t name_len = read_u32(is, path);
        std::string name(name_len, '\0');
        if (name_len && !is.read(name.data(), name_len)) {
            throw IoError("checkpoint truncated: " + path);
        }
        const uint32_t rank = read_u32(is, path);
        if (rank < 1 || rank > 3) throw IoError("checkpoint tensor rank out of range: " + path);
        std::vector<int64_t> ext(rank);
        for (uint32_t a = 0; a < rank; ++a) ext[a] = int64_t(read_u64(is, path));
        Tensor t = tensor_with_extents(ext);
        if (!is.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * 4))) {
            throw IoError("checkpoint truncated: " + path);
        }
        data.tensors.emplace_back(std::move(name), std::move(t));
    }
    return data;
}

CheckpointData snapshot_model(const TransformerModel& m) {
    CheckpointData data;
    const ModelConfig& c = m.cfg;
    data.config = {
        {"d_model", std::to_string(c.d_model)},
        {"n_layers", std::to_string(c.n_layers)},
        {"n_heads", std::to_string(c.n_heads)},
        {"vocab_size", std::to_string(c.vocab_size)},
        {"max_seq_len", std::to_string(c.max_seq_len)},
        {"variant", to_string(c.variant)},
        {"norm", to_string(c.norm)},
    };
    for (const ParamTensor* p : m.params()) {
        data.tensors.emplace_back(p->name, p->value);
    }
    return data;
}

ModelConfig config_from_checkpoint(const CheckpointData& data) {
    auto need = [&](const char* key) -> const std::string& {
        const std::string* v = data.find_key(key);
        if (!v) throw IoError(std::string("checkpoint missing key: ") + key);
        return *v;
    };
    ModelConfig cfg;
    cfg.d_model = std::stoll(need("d_model"));
    cfg.n_layers = int(std::stol(need("n_layers")));
    cfg.n_heads = int(std::stol(need("n_heads")));
    cfg.vocab_size = std::stoll(need("vocab_size"));
    cfg.max_seq_len = std::stoll(need("max_seq_len"));
    cfg.variant = variant_from_string(need("variant"));
    cfg.norm = norm_from_string(need("norm"));
    cfg.validate();
    return cfg;
}

TransformerModel model_from_checkpoint(const CheckpointData& data) {
    TransformerModel m = TransformerModel::init(config_from_checkpoint(data), 0);
    for (ParamTensor* p : m.params()) {
        const Tensor* t = data.find_tensor(p->name);
        if (!t) throw IoError("checkpoint missing tensor: " + p->name);
        if (!t->same_shape(p->value)) {
            throw IoError("checkpoint tensor shape mismatch: " + p->name);
        }
        p->value = *t;
    }
    return m;
}

}  // namespace hadamix
