#include "moeprune/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace moeprune {

namespace {

constexpr char kMagic[9] = {'M', 'O', 'E', 'P', 'R', 'U', 'N', 'E', '1'};

void write_i64(std::ostream& os, std::int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_str(std::ostream& os, const std::string& s) {
    write_i64(os, static_cast<std::int64_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::int64_t read_i64(std::istream& is) {
    std::int64_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

double read_f64(std::istream& is) {
    double v;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

std::string read_str(std::istream& is) {
    std::int64_t n = read_i64(is);
    if (n < 0 || n > 1 << 20) throw std::runtime_error("checkpoint: bad string length");
    std::string s(static_cast<size_t>(n), '\0');
    is.read(s.data(), n);
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const MoEModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof(kMagic));

    const ModelConfig& c = model.config();
    for (std::int64_t v : {static_cast<std::int64_t>(c.vocab_size), (std::int64_t)c.d_model,
                           (std::int64_t)c.d_ffn, (std::int64_t)c.n_heads,
                           (std::int64_t)c.enc_layers, (std::int64_t)c.dec_layers,
                           (std::int64_t)c.moe_frequency, (std::int64_t)c.num_experts,
                           (std::int64_t)c.top_k, (std::int64_t)c.beam_size})
        write_i64(os, v);
    write_f64(os, c.label_smoothing);
    write_f64(os, c.lb_loss_coeff);

    const auto& params = model.named_parameters();
    write_i64(os, static_cast<std::int64_t>(params.size()));
    std::int64_t offset = 0;
    for (const auto& [name, p] : params) {
        write_str(os, name);
        write_i64(os, p->value.rows());
        write_i64(os, p->value.cols());
        write_i64(os, offset);
        offset += p->value.size();
    }
    for (const auto& [name, p] : params) {
        // row-major write for a stable on-disk layout
        for (Eigen::Index r = 0; r < p->value.rows(); ++r)
            for (Eigen::Index col = 0; col < p->value.cols(); ++col)
                write_f64(os, p->value(r, col));
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

MoEModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[sizeof(kMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a model checkpoint: " + path);

    ModelConfig c;
    c.vocab_size = static_cast<int>(read_i64(is));
    c.d_model = static_cast<int>(read_i64(is));
    c.d_ffn = static_cast<int>(read_i64(is));
    c.n_heads = static_cast<int>(read_i64(is));
    c.enc_layers = static_cast<int>(read_i64(is));
    c.dec_layers = static_cast<int>(read_i64(is));
    c.moe_frequency = static_cast<int>(read_i64(is));
    c.num_experts = static_cast<int>(read_i64(is));
    c.top_k = static_cast<int>(read_i64(is));
    c.beam_size = static_cast<int>(read_i64(is));
    c.label_smoothing = read_f64(is);
    c.lb_loss_coeff = read_f64(is);

    MoEModel model(c, /*seed=*/0);
    auto& params = model.named_parameters();

    std::int64_t count = read_i64(is);
    if (count != static_cast<std::int64_t>(params.size()))
        throw std::runtime_error("checkpoint: parameter count mismatch");
    struct Entry {
        std::string name;
        std::int64_t rows, cols, offset;
    };
    std::vector<Entry> manifest;
    for (std::int64_t i = 0; i < count; ++i) {
        Entry e;
        e.name = read_str(is);
        e.rows = read_i64(is);
        e.cols = read_i64(is);
        e.offset = read_i64(is);
        manifest.push_back(std::move(e));
    }
    for (std::int64_t i = 0; i < count; ++i) {
        const Entry& e = manifest[i];
        auto& [name, p] = params[static_cast<size_t>(i)];
        if (name != e.name || p->value.rows() != e.rows || p->value.cols() != e.cols)
            throw std::runtime_error("checkpoint: manifest mismatch at " + e.name);
        for (Eigen::Index r = 0; r < e.rows; ++r)
            for (Eigen::Index col = 0; col < e.cols; ++col) p->value(r, col) = read_f64(is);
    }
    if (!is) throw std::runtime_error("checkpoint truncated: " + path);
    return model;
}

}  // namespace moeprune
