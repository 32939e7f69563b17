#ifndef MOIRE_UTIL_HPP
#define MOIRE_UTIL_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace moire {

/// Deterministic parallel map over [0, n): each index writes only its own
/// slot, so results are identical for any thread count.
inline void parallel_for(int n, int num_threads, const std::function<void(int)>& body)
{
    if (num_threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    num_threads = std::min(num_threads, n);
    std::vector<std::thread> pool;
    pool.reserve(num_threads);
    for (int t = 0; t < num_threads; ++t) {
        pool.emplace_back([&, t]() {
            for (int i = t; i < n; i += num_threads) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

/// FNV-1a 64-bit, used for config and output-file hashes in run manifests.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 14695981039346656037ull)
{
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::string to_hex(std::uint64_t h);

}  // namespace moire

#endif
