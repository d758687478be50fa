#include "frec/rng.hpp"

#include <stdexcept>
#include <unordered_set>

namespace frec {

std::vector<std::uint64_t> Rng::sample_without_replacement(std::uint64_t n, std::uint64_t universe) {
    if (n > universe) throw std::invalid_argument("sample_without_replacement: n > universe");
    std::vector<std::uint64_t> out;
    out.reserve(n);
    std::unordered_set<std::uint64_t> seen;
    while (out.size() < n) {
        std::uint64_t v = index(universe);
        if (seen.insert(v).second) out.push_back(v);
    }
    return out;
}

std::uint64_t substream_seed(std::uint64_t root, std::string_view name,
                             std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    Rng mix(root ^ h);
    mix.next();
    std::uint64_t s = mix.next() ^ (a * 0x9E3779B97F4A7C15ULL);
    Rng mix2(s);
    mix2.next();
    return mix2.next() ^ (b * 0xD1B54A32D192ED03ULL);
}

}  // namespace frec
