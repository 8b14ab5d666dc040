#pragma once

#include <bit>
#include <cstring>
#include <fstream>

#include "strans/networks.hpp"
#include "strans/optimizer.hpp"

// Versioned binary checkpoint container. Field order (all integers and
// floats little-endian):
//
//   magic "STCK" | u32 version=1 | u32 dtype (0=f32, 1=f64) | u64 step
//   u64 config_hash | str config_text | str rng_state
//   u64 adam_g_t | u64 adam_d_t | u64 n_entries | entry*
//   entry: str name | u8 trainable | u32 ndim | u64 dim[ndim]
//          | values | (adam_m | adam_v   when trainable)
//   str:   u64 byte_length | bytes
//   values/adam_m/adam_v: numel scalars of the header dtype
//
// Entries hold the generator parameters in registration order under "g.",
// then the discriminator's under "d.". config_text is the canonical run
// config, sufficient to rebuild both networks; config_hash is its FNV-1a.
// Scalars are stored at the training precision so resuming reproduces the
// interrupted run bit for bit.

namespace strans {

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

template <class T>
constexpr std::uint32_t dtype_code() {
    return sizeof(T) == 4 ? 0u : 1u;
}

namespace detail {

struct ByteWriter {
    std::string buf;

    void bytes(const void* p, size_t n) {
        buf.append(static_cast<const char*>(p), n);
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    template <class T>
    void scalars(const std::vector<T>& v) {
        bytes(v.data(), v.size() * sizeof(T));
    }
};

struct ByteReader {
    const std::string& buf;
    size_t pos = 0;

    void bytes(void* p, size_t n) {
        ST_CHECK(pos + n <= buf.size(), "checkpoint truncated at byte " << pos);
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        std::string s(u64(), '\0');
        bytes(s.data(), s.size());
        return s;
    }
    template <class T>
    std::vector<T> scalars(size_t n) {
        std::vector<T> v(n);
        bytes(v.data(), n * sizeof(T));
        return v;
    }
};

}  // namespace detail

template <class T>
struct CheckpointEntry {
    std::string name;
    bool trainable = true;
    Shape shape;
    std::vector<T> values, m, v;  // m/v empty when not trainable
};

template <class T>
struct Checkpoint {
    std::uint64_t step = 0;
    std::string config_text;
    std::uint64_t config_hash = 0;
    std::string rng_state;
    std::int64_t adam_g_t = 0, adam_d_t = 0;
    std::vector<CheckpointEntry<T>> entries;
};

// ---------------------------------------------------------------------------
// Snapshot / restore against live networks
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void snapshot_params(const ParamList<T>& params, const AdamState<T>& st,
                     const std::string& prefix,
                     std::vector<CheckpointEntry<T>>& out) {
    ST_CHECK(st.m.size() == params.items.size(),
             "optimizer state does not match parameter list");
    for (size_t p = 0; p < params.items.size(); ++p) {
        const auto& e = params.items[p];
        CheckpointEntry<T> ce;
        ce.name = prefix + e.name;
        ce.trainable = e.trainable;
        ce.shape = e.tensor.shape();
        ce.values = e.tensor.values();
        if (e.trainable) {
            ce.m = st.m[p];
            ce.v = st.v[p];
        }
        out.push_back(std::move(ce));
    }
}

template <class T>
size_t restore_params(const std::vector<CheckpointEntry<T>>& entries, size_t at,
                      ParamList<T>& params, AdamState<T>& st,
                      const std::string& prefix) {
    ST_CHECK(st.m.size() == params.items.size(),
             "optimizer state does not match parameter list");
    for (size_t p = 0; p < params.items.size(); ++p) {
        auto& e = params.items[p];
        ST_CHECK(at < entries.size(), "checkpoint is missing entries");
        const auto& ce = entries[at++];
        ST_CHECK(ce.name == prefix + e.name,
                 "checkpoint entry '" << ce.name << "' does not match parameter '"
                 << prefix << e.name << "' (architecture mismatch)");
        ST_CHECK(ce.shape == e.tensor.shape() && ce.trainable == e.trainable,
                 "checkpoint entry '" << ce.name << "' has shape "
                 << shape_str(ce.shape) << ", parameter wants "
                 << shape_str(e.tensor.shape()));
        e.tensor.raw() = ce.values;
        if (e.trainable) {
            st.m[p] = ce.m;
            st.v[p] = ce.v;
        }
    }
    return at;
}

}  // namespace detail

template <class T>
Checkpoint<T> snapshot_checkpoint(const Generator<T>& g,
                                  const Discriminator<T>& d,
                                  const Adam<T>& adam_g, const Adam<T>& adam_d,
                                  std::uint64_t step,
                                  const std::string& config_text,
                                  const std::string& rng_state) {
    Checkpoint<T> ck;
    ck.step = step;
    ck.config_text = config_text;
    ck.config_hash = fnv1a64(config_text);
    ck.rng_state = rng_state;
    ck.adam_g_t = adam_g.state.t;
    ck.adam_d_t = adam_d.state.t;
    detail::snapshot_params(g.params, adam_g.state, "g.", ck.entries);
    detail::snapshot_params(d.params, adam_d.state, "d.", ck.entries);
    return ck;
}

template <class T>
void restore_checkpoint(const Checkpoint<T>& ck, Generator<T>& g,
                        Discriminator<T>& d, Adam<T>& adam_g,
                        Adam<T>& adam_d) {
    size_t at = detail::restore_params(ck.entries, 0, g.params, adam_g.state, "g.");
    at = detail::restore_params(ck.entries, at, d.params, adam_d.state, "d.");
    ST_CHECK(at == ck.entries.size(),
             "checkpoint holds " << ck.entries.size() << " entries, networks used "
             << at);
    adam_g.state.t = ck.adam_g_t;
    adam_d.state.t = ck.adam_d_t;
}

// ---------------------------------------------------------------------------
// Codec
// ---------------------------------------------------------------------------

template <class T>
std::string encode_checkpoint(const Checkpoint<T>& ck) {
    detail::ByteWriter w;
    w.bytes("STCK", 4);
    w.u32(kCheckpointVersion);
    w.u32(dtype_code<T>());
    w.u64(ck.step);
    w.u64(ck.config_hash);
    w.str(ck.config_text);
    w.str(ck.rng_state);
    w.u64(static_cast<std::uint64_t>(ck.adam_g_t));
    w.u64(static_cast<std::uint64_t>(ck.adam_d_t));
    w.u64(ck.entries.size());
    for (const auto& e : ck.entries) {
        w.str(e.name);
        w.u8(e.trainable ? 1 : 0);
        w.u32(static_cast<std::uint32_t>(e.shape.size()));
        for (index_t d : e.shape) w.u64(static_cast<std::uint64_t>(d));
        w.scalars(e.values);
        if (e.trainable) {
            w.scalars(e.m);
            w.scalars(e.v);
        }
    }
    return std::move(w.buf);
}

/// Header peek so the CLI can pick the scalar type before decoding.
inline std::uint32_t checkpoint_dtype(const std::string& bytes) {
    ST_CHECK(bytes.size() >= 12 && bytes.compare(0, 4, "STCK") == 0,
             "not a checkpoint file");
    std::uint32_t version, dtype;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&dtype, bytes.data() + 8, 4);
    ST_CHECK(version == kCheckpointVersion,
             "unsupported checkpoint version " << version);
    ST_CHECK(dtype <= 1, "unknown checkpoint dtype code " << dtype);
    return dtype;
}

template <class T>
Checkpoint<T> decode_checkpoint(const std::string& bytes) {
    ST_CHECK(checkpoint_dtype(bytes) == dtype_code<T>(),
             "checkpoint stores "
             << (checkpoint_dtype(bytes) == 0 ? "32" : "64")
             << "-bit scalars; load it at that precision");
    detail::ByteReader r{bytes, 12};
    Checkpoint<T> ck;
    ck.step = r.u64();
    ck.config_hash = r.u64();
    ck.config_text = r.str();
    ck.rng_state = r.str();
    ck.adam_g_t = static_cast<std::int64_t>(r.u64());
    ck.adam_d_t = static_cast<std::int64_t>(r.u64());
    ST_CHECK(ck.config_hash == fnv1a64(ck.config_text),
             "checkpoint config hash mismatch (corrupt file?)");
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        CheckpointEntry<T> e;
        e.name = r.str();
        e.trainable = r.u8() != 0;
        const std::uint32_t ndim = r.u32();
        for (std::uint32_t d = 0; d < ndim; ++d)
            e.shape.push_back(static_cast<index_t>(r.u64()));
        const size_t numel = static_cast<size_t>(shape_numel(e.shape));
        e.values = r.template scalars<T>(numel);
        if (e.trainable) {
            e.m = r.template scalars<T>(numel);
            e.v = r.template scalars<T>(numel);
        }
        ck.entries.push_back(std::move(e));
    }
    ST_CHECK(r.pos == bytes.size(), "trailing bytes after checkpoint payload");
    return ck;
}

inline std::string read_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    ST_CHECK(in.good(), "cannot open " << path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_binary_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    ST_CHECK(out.good(), "cannot write " << path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    ST_CHECK(out.good(), "write failed for " << path);
}

template <class T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ck) {
    write_binary_file(path, encode_checkpoint(ck));
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    return decode_checkpoint<T>(read_binary_file(path));
}

inline std::uint32_t checkpoint_dtype_file(const std::string& path) {
    return checkpoint_dtype(read_binary_file(path));
}

}  // namespace strans
