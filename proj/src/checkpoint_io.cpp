#include "razor/checkpoint_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "razor/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace razor {

namespace {

void put_u16(std::vector<unsigned char>& out, uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::vector<unsigned char>& bytes;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > bytes.size()) throw IntegrityError("checkpoint file truncated");
    }
    uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(bytes[pos]) | (static_cast<uint16_t>(bytes[pos + 1]) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(&bytes[pos]), n);
        pos += n;
        return s;
    }
};

}  // namespace

std::string config_block_text(const ModelConfig& cfg, const CheckpointMeta& meta) {
    std::ostringstream os;
    os << "embed_dim = " << cfg.embed_dim << "\n"
       << "n_blocks = " << cfg.n_blocks << "\n"
       << "n_heads = " << cfg.n_heads << "\n"
       << "mlp_hidden = " << cfg.mlp_hidden << "\n"
       << "vocab_size = " << cfg.vocab_size << "\n"
       << "n_patches = " << cfg.n_patches << "\n"
       << "patch_dim = " << cfg.patch_dim << "\n"
       << "max_text_len = " << cfg.max_text_len << "\n"
       << "seed = " << meta.seed << "\n"
       << "step = " << meta.step << "\n"
       << "quant_bits = " << meta.quant_bits << "\n";
    return os.str();
}

namespace {

void parse_config_block(const std::string& text, ModelConfig& cfg, CheckpointMeta& meta) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) throw IntegrityError("checkpoint config block malformed");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
        };
        trim(key);
        trim(val);
        if (key == "embed_dim") cfg.embed_dim = std::stoi(val);
        else if (key == "n_blocks") cfg.n_blocks = std::stoi(val);
        else if (key == "n_heads") cfg.n_heads = std::stoi(val);
        else if (key == "mlp_hidden") cfg.mlp_hidden = std::stoi(val);
        else if (key == "vocab_size") cfg.vocab_size = std::stoi(val);
        else if (key == "n_patches") cfg.n_patches = std::stoi(val);
        else if (key == "patch_dim") cfg.patch_dim = std::stoi(val);
        else if (key == "max_text_len") cfg.max_text_len = std::stoi(val);
        else if (key == "seed") meta.seed = std::stoull(val);
        else if (key == "step") meta.step = std::stoi(val);
        else if (key == "quant_bits") meta.quant_bits = std::stoi(val);
        else throw IntegrityError("checkpoint config block: unknown key " + key);
    }
}

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& c) {
    c.validate();
    std::vector<unsigned char> out;
    out.insert(out.end(), {'R', 'Z', 'C', 'K'});
    put_u32(out, kCheckpointFormatVersion);
    std::string cfg_text = config_block_text(c.config, c.meta);
    put_u32(out, static_cast<uint32_t>(cfg_text.size()));
    out.insert(out.end(), cfg_text.begin(), cfg_text.end());

    auto spec = param_spec(c.config);
    put_u32(out, static_cast<uint32_t>(spec.size()));
    for (const auto& [name, shape] : spec) {
        const Tensor& t = c.params.at(name);
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<unsigned char>(t.rank()));
        for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
        size_t off = out.size();
        out.resize(off + t.data.size() * sizeof(double));
        std::memcpy(&out[off], t.data.data(), t.data.size() * sizeof(double));
    }
    uint32_t crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size())));
    put_u32(out, crc);
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 12) throw IntegrityError("checkpoint file too short");
    uint32_t stored_crc;
    std::memcpy(&stored_crc, &bytes[bytes.size() - 4], 4);
    uint32_t crc = static_cast<uint32_t>(crc32(
        0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size() - 4)));
    if (crc != stored_crc) throw IntegrityError("checkpoint CRC mismatch");

    Reader r{bytes};
    if (r.str(4) != "RZCK") throw IntegrityError("checkpoint magic mismatch");
    uint32_t version = r.u32();
    if (version != kCheckpointFormatVersion)
        throw IntegrityError("unsupported checkpoint format version");
    uint32_t cfg_len = r.u32();
    std::string cfg_text = r.str(cfg_len);

    Checkpoint c;
    parse_config_block(cfg_text, c.config, c.meta);
    uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t name_len = r.u16();
        std::string name = r.str(name_len);
        uint8_t rank = r.u8();
        std::vector<int> shape;
        for (int d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
        int64_t n = shape_size(shape);
        r.need(static_cast<size_t>(n) * sizeof(double));
        std::vector<double> data(static_cast<size_t>(n));
        std::memcpy(data.data(), &bytes[r.pos], data.size() * sizeof(double));
        r.pos += data.size() * sizeof(double);
        c.params.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (r.pos != bytes.size() - 4) throw IntegrityError("checkpoint trailing bytes");
    c.validate();
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    auto bytes = serialize_checkpoint(c);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot open checkpoint file for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw InputError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open checkpoint file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace razor
