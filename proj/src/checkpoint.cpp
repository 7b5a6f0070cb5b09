#include "fundus/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fundus/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace fundus::checkpoint {

namespace {

constexpr char kMagic[6] = {'W', 'R', 'O', 'I', 'M', '1'};

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const char* what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw DataError(std::string("checkpoint truncated while reading ") + what);
    return v;
}

}  // namespace

Checkpoint snapshot(const ParamStore<float>& store, std::uint64_t config_hash,
                    std::uint32_t epoch, float val_loss, bool with_velocity) {
    Checkpoint c;
    c.kind = with_velocity ? 1 : 0;
    c.config_hash = config_hash;
    c.epoch = epoch;
    c.val_loss = val_loss;
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& p = store.at(i);
        Checkpoint::Entry e;
        e.path = p.path;
        e.shape = p.shape;
        e.value = p.value;
        if (with_velocity)
            e.velocity = p.velocity.empty()
                             ? std::vector<float>(static_cast<std::size_t>(p.numel()), 0.0f)
                             : p.velocity;
        c.entries.push_back(std::move(e));
    }
    return c;
}

void apply(const Checkpoint& ckpt, ParamStore<float>& store, bool with_velocity) {
    if (ckpt.entries.size() != store.size())
        throw DataError("incompatible checkpoint: " + std::to_string(ckpt.entries.size()) +
                        " entries vs " + std::to_string(store.size()) + " model parameters");
    for (const auto& e : ckpt.entries) {
        Param<float>* p = store.find(e.path);
        if (!p) throw DataError("incompatible checkpoint: model has no parameter '" + e.path + "'");
        if (p->shape != e.shape)
            throw DataError("incompatible checkpoint: parameter '" + e.path + "' is " +
                            shape_str(e.shape) + ", model expects " + shape_str(p->shape));
        p->value = e.value;
        if (with_velocity && ckpt.kind == 1) p->velocity = e.velocity;
    }
}

void save(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint '" + path + "'");
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, Checkpoint::kVersion);
    put<std::uint8_t>(os, ckpt.kind);
    put<std::uint64_t>(os, ckpt.config_hash);
    put<std::uint32_t>(os, ckpt.epoch);
    put<float>(os, ckpt.val_loss);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.entries.size()));
    for (const auto& e : ckpt.entries) {
        put<std::uint16_t>(os, static_cast<std::uint16_t>(e.path.size()));
        os.write(e.path.data(), static_cast<std::streamsize>(e.path.size()));
        put<std::uint8_t>(os, static_cast<std::uint8_t>(e.shape.size()));
        for (int d : e.shape) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(e.value.data()),
                 static_cast<std::streamsize>(e.value.size() * sizeof(float)));
        if (ckpt.kind == 1)
            os.write(reinterpret_cast<const char*>(e.velocity.data()),
                     static_cast<std::streamsize>(e.velocity.size() * sizeof(float)));
    }
    if (!os) throw DataError("short write to checkpoint '" + path + "'");
}

Checkpoint load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[6];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw DataError("'" + path + "' is not a checkpoint (bad magic)");
    Checkpoint c;
    const auto version = get<std::uint32_t>(is, "version");
    if (version != Checkpoint::kVersion)
        throw DataError("checkpoint version " + std::to_string(version) + " unsupported (want " +
                        std::to_string(Checkpoint::kVersion) + ")");
    c.kind = get<std::uint8_t>(is, "kind");
    c.config_hash = get<std::uint64_t>(is, "config hash");
    c.epoch = get<std::uint32_t>(is, "epoch");
    c.val_loss = get<float>(is, "val loss");
    const auto count = get<std::uint32_t>(is, "entry count");
    for (std::uint32_t i = 0; i < count; ++i) {
        Checkpoint::Entry e;
        const auto len = get<std::uint16_t>(is, "path length");
        e.path.resize(len);
        is.read(e.path.data(), len);
        const auto ndim = get<std::uint8_t>(is, "ndim");
        std::int64_t numel = 1;
        for (int d = 0; d < ndim; ++d) {
            e.shape.push_back(static_cast<int>(get<std::uint32_t>(is, "dim")));
            numel *= e.shape.back();
        }
        e.value.resize(static_cast<std::size_t>(numel));
        is.read(reinterpret_cast<char*>(e.value.data()),
                static_cast<std::streamsize>(e.value.size() * sizeof(float)));
        if (c.kind == 1) {
            e.velocity.resize(static_cast<std::size_t>(numel));
            is.read(reinterpret_cast<char*>(e.velocity.data()),
                    static_cast<std::streamsize>(e.velocity.size() * sizeof(float)));
        }
        if (!is) throw DataError("checkpoint truncated inside entry '" + e.path + "'");
        c.entries.push_back(std::move(e));
    }
    return c;
}

}  // namespace fundus::checkpoint
