#pragma once

// Checkpoint file layout (all integers and reals little-endian):
//
//   magic    8 bytes  "LILICKPT"
//   version  u32
//   count    u64
//   count x { name_len u32, name bytes (UTF-8), rank u32, dims u64[rank], payload f64[prod(dims)] }
//
// Optimizer state lives under names starting with "optim/".

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "lili/autodiff/adam.hpp"
#include "lili/autodiff/mlp.hpp"
#include "lili/autodiff/tensor.hpp"

namespace lili {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "LILICKPT";
inline constexpr std::string_view kOptimizerPrefix = "optim/";

/// Ordered collection of named arrays.
class Checkpoint {
public:
    void put(const std::string& name, Tensor t) {
        for (auto& [n, v] : entries_)
            if (n == name) {
                v = std::move(t);
                return;
            }
        entries_.emplace_back(name, std::move(t));
    }

    [[nodiscard]] const Tensor& get(const std::string& name) const {
        for (const auto& [n, v] : entries_)
            if (n == name) return v;
        throw ConfigError("checkpoint has no array named '" + name + "'");
    }
    [[nodiscard]] bool contains(const std::string& name) const {
        for (const auto& [n, v] : entries_)
            if (n == name) return true;
        return false;
    }

    [[nodiscard]] const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }

    bool operator==(const Checkpoint&) const = default;

    void put_mlp(const std::string& prefix, const MlpParams& net) {
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            put(prefix + "/" + std::to_string(i) + "/w", net.layers[i].weight);
            put(prefix + "/" + std::to_string(i) + "/b", net.layers[i].bias);
        }
    }

    /// Copies stored weights into `net`, which must already have matching shapes.
    void load_mlp(const std::string& prefix, MlpParams& net) const {
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            load_into(prefix + "/" + std::to_string(i) + "/w", net.layers[i].weight);
            load_into(prefix + "/" + std::to_string(i) + "/b", net.layers[i].bias);
        }
    }

    void put_adam(const std::string& group, const AdamState& s) {
        const std::string base = std::string(kOptimizerPrefix) + group;
        for (std::size_t k = 0; k < s.first_moment.size(); ++k) {
            put(base + "/m/" + std::to_string(k), s.first_moment[k]);
            put(base + "/v/" + std::to_string(k), s.second_moment[k]);
        }
        put(base + "/step", Tensor(Shape{1}, std::vector<double>{static_cast<double>(s.step)}));
    }

    void load_adam(const std::string& group, AdamState& s) const {
        const std::string base = std::string(kOptimizerPrefix) + group;
        for (std::size_t k = 0; k < s.first_moment.size(); ++k) {
            load_into(base + "/m/" + std::to_string(k), s.first_moment[k]);
            load_into(base + "/v/" + std::to_string(k), s.second_moment[k]);
        }
        s.step = static_cast<std::uint64_t>(get(base + "/step")[0]);
    }

    void load_into(const std::string& name, Tensor& dst) const {
        const Tensor& src = get(name);
        if (src.shape() != dst.shape())
            throw ConfigError("checkpoint array '" + name + "' has shape " + shape_string(src.shape()) +
                              " but the model expects " + shape_string(dst.shape()));
        dst.data() = src.data();
    }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::string_view in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw ConfigError("checkpoint truncated");
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out(kCheckpointMagic);
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    detail::put_le<std::uint64_t>(out, ckpt.entries().size());
    for (const auto& [name, t] : ckpt.entries()) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) detail::put_le<std::uint64_t>(out, d);
        for (double v : t.data()) detail::put_le<double>(out, v);
    }
    return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) throw ConfigError("not a checkpoint file");
    std::size_t pos = kCheckpointMagic.size();
    const auto version = detail::get_le<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion)
        throw ConfigError("unsupported checkpoint version " + std::to_string(version));
    const auto count = detail::get_le<std::uint64_t>(bytes, pos);
    Checkpoint ckpt;
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto len = detail::get_le<std::uint32_t>(bytes, pos);
        if (pos + len > bytes.size()) throw ConfigError("checkpoint truncated");
        std::string name(bytes.substr(pos, len));
        pos += len;
        const auto rank = detail::get_le<std::uint32_t>(bytes, pos);
        Shape shape(rank);
        for (auto& d : shape) d = detail::get_le<std::uint64_t>(bytes, pos);
        std::vector<double> values(shape_size(shape));
        for (auto& v : values) v = detail::get_le<double>(bytes, pos);
        ckpt.put(name, Tensor(std::move(shape), std::move(values)));
    }
    if (pos != bytes.size()) throw ConfigError("trailing bytes after checkpoint payload");
    return ckpt;
}

/// Writes to a temporary sibling and renames it over `path`.
inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot open " + tmp.string() + " for writing");
        const auto bytes = encode_checkpoint(ckpt);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw ConfigError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace lili
