#include "frec/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace frec {

Tensor& ParamStore::add(const std::string& name, Tensor t, bool decay, bool trainable) {
    auto [it, inserted] = tensors.emplace(name, std::move(t));
    if (!inserted) throw std::invalid_argument("ParamStore: duplicate name " + name);
    if (!decay) no_decay.insert(name);
    if (!trainable) non_trainable.insert(name);
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("ParamStore: unknown name " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("ParamStore: unknown name " + name);
    return it->second;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
}

Tensor uniform_init(int rows, int cols, double lo, double hi, Rng& rng) {
    Tensor t(rows, cols);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

Tensor glorot_init(int rows, int cols, Rng& rng) {
    double limit = std::sqrt(6.0 / (rows + cols));
    return uniform_init(rows, cols, -limit, limit, rng);
}

namespace {

constexpr char kMagic[8] = {'F', 'R', 'E', 'C', 'C', 'K', '0', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

void write_f64(std::ostream& os, const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &p[i], 8);
        unsigned char b[8];
        for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
        os.write(reinterpret_cast<const char*>(b), 8);
    }
}

void read_f64(std::istream& is, double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
        std::memcpy(&p[i], &bits, 8);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, std::string>& manifest) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write(kMagic, 8);
    std::string mani;
    for (const auto& [k, v] : manifest) mani += k + "=" + v + "\n";
    write_string(os, mani);
    std::string flags;
    for (const auto& n : params.no_decay) flags += "no_decay:" + n + "\n";
    for (const auto& n : params.non_trainable) flags += "non_trainable:" + n + "\n";
    write_string(os, flags);
    write_u32(os, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& [name, t] : params.tensors) {
        write_string(os, name);
        write_u32(os, static_cast<std::uint32_t>(t.rows));
        write_u32(os, static_cast<std::uint32_t>(t.cols));
        write_f64(os, t.data.data(), t.size());
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path,
                           std::map<std::string, std::string>* manifest) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    std::string mani = read_string(is);
    if (manifest) {
        manifest->clear();
        std::size_t pos = 0;
        while (pos < mani.size()) {
            std::size_t nl = mani.find('\n', pos);
            if (nl == std::string::npos) nl = mani.size();
            std::string line = mani.substr(pos, nl - pos);
            std::size_t eq = line.find('=');
            if (eq != std::string::npos) (*manifest)[line.substr(0, eq)] = line.substr(eq + 1);
            pos = nl + 1;
        }
    }
    std::string flags = read_string(is);
    ParamStore ps;
    std::uint32_t n = read_u32(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = read_string(is);
        std::uint32_t rows = read_u32(is);
        std::uint32_t cols = read_u32(is);
        Tensor t(static_cast<int>(rows), static_cast<int>(cols));
        read_f64(is, t.data.data(), t.size());
        if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
        ps.tensors.emplace(std::move(name), std::move(t));
    }
    std::size_t pos = 0;
    while (pos < flags.size()) {
        std::size_t nl = flags.find('\n', pos);
        if (nl == std::string::npos) nl = flags.size();
        std::string line = flags.substr(pos, nl - pos);
        if (line.rfind("no_decay:", 0) == 0) ps.no_decay.insert(line.substr(9));
        else if (line.rfind("non_trainable:", 0) == 0) ps.non_trainable.insert(line.substr(14));
        pos = nl + 1;
    }
    return ps;
}

}  // namespace frec
