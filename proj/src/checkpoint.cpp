#include "mmcs/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mmcs {

namespace {

constexpr char kMagic[5] = {'M', 'M', 'C', 'S', '1'};

void put_u16(std::ostream& out, uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                                static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint16_t get_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw InputError("checkpoint truncated");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw InputError("checkpoint truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw InputError("checkpoint truncated");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint: " + path);

    out.write(kMagic, 5);
    const std::string cfg = config.to_json().dump();
    put_u32(out, static_cast<uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

    put_u32(out, static_cast<uint32_t>(params.count()));
    for (const auto& name : params.names()) {
        const Tensor& t = params.value(name);
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(static_cast<char>(t.rank()));
        for (int d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
        for (int64_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
    }
    if (!out) throw InputError("failed while writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path);

    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, kMagic, 5) != 0)
        throw InputError("not a checkpoint file (bad magic): " + path);

    const uint32_t cfg_len = get_u32(in);
    std::string cfg(cfg_len, '\0');
    in.read(cfg.data(), cfg_len);
    if (!in) throw InputError("checkpoint truncated");

    LoadedCheckpoint loaded;
    try {
        loaded.config = ModelConfig::from_json(nlohmann::json::parse(cfg));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("checkpoint config is not valid JSON: ") + e.what());
    }

    const auto expected = param_spec(loaded.config);
    const uint32_t n = get_u32(in);
    if (n != expected.size())
        throw InputError("checkpoint holds " + std::to_string(n) + " parameters, config expects " +
                         std::to_string(expected.size()));

    for (const auto& e : expected) {
        const uint16_t name_len = get_u16(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw InputError("checkpoint truncated");
        if (name != e.name)
            throw InputError("checkpoint parameter \"" + name + "\" does not match expected \"" +
                             e.name + "\"");
        const int rank = in.get();
        if (rank != static_cast<int>(e.shape.size()))
            throw InputError("parameter " + name + ": rank " + std::to_string(rank) +
                             " does not match config");
        std::vector<int> shape(e.shape.size());
        for (auto& d : shape) d = static_cast<int>(get_u32(in));
        if (shape != e.shape)
            throw InputError("parameter " + name + ": shape " + shape_to_string(shape) +
                             " does not match config " + shape_to_string(e.shape));
        Tensor t(shape);
        for (int64_t i = 0; i < t.size(); ++i) t[i] = get_f64(in);
        loaded.params.add(name, std::move(t));
    }
    return loaded;
}

} // namespace mmcs
