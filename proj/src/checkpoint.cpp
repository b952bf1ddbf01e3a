#include "docsegtr/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "docsegtr/evalkit.hpp"

namespace docsegtr {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'G', 'T'};

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("checkpoint: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

float read_f32(std::istream& is) {
    const std::uint32_t bits = read_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

// Exact double -> (hi, mid, lo) float32 split: d == hi + mid + lo.
void split_double(double d, float& hi, float& mid, float& lo) {
    hi = static_cast<float>(d);
    const double r1 = d - static_cast<double>(hi);
    mid = static_cast<float>(r1);
    const double r2 = r1 - static_cast<double>(mid);
    lo = static_cast<float>(r2);
}

void push_split_entry(Checkpoint& ckpt, const std::string& name,
                      const std::vector<std::uint32_t>& dims, const std::vector<double>& vals) {
    CheckpointEntry hi, mid, lo;
    hi.name = name;
    mid.name = name + "@mid";
    lo.name = name + "@lo";
    hi.dims = mid.dims = lo.dims = dims;
    hi.data.resize(vals.size());
    mid.data.resize(vals.size());
    lo.data.resize(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        split_double(vals[i], hi.data[i], mid.data[i], lo.data[i]);
    }
    ckpt.entries.push_back(std::move(hi));
    ckpt.entries.push_back(std::move(mid));
    ckpt.entries.push_back(std::move(lo));
}

std::vector<std::uint32_t> tensor_dims(const Tensor& t) {
    std::vector<std::uint32_t> dims;
    for (auto d : t.shape()) dims.push_back(static_cast<std::uint32_t>(d));
    return dims;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, ckpt.version);
    write_u32(os, static_cast<std::uint32_t>(ckpt.entries.size()));
    std::set<std::string> names;
    for (const auto& e : ckpt.entries) {
        if (!names.insert(e.name).second) {
            throw FormatError("checkpoint: duplicate entry name " + e.name);
        }
        write_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_u32(os, static_cast<std::uint32_t>(e.dims.size()));
        std::uint64_t prod = 1;
        for (auto d : e.dims) {
            write_u32(os, d);
            prod *= d;
        }
        if (prod != e.data.size()) {
            throw FormatError("checkpoint entry " + e.name + ": dims do not match data length");
        }
        for (float v : e.data) write_f32(os, v);
    }
    if (!os) throw FormatError("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("not a DSGT checkpoint: " + path);
    }
    Checkpoint ckpt;
    ckpt.version = read_u32(is);
    if (ckpt.version != 1) throw FormatError("unsupported checkpoint version in " + path);
    const std::uint32_t count = read_u32(is);
    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const std::uint32_t name_len = read_u32(is);
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        if (!is) throw FormatError("checkpoint: truncated name in " + path);
        if (!seen.insert(e.name).second) {
            throw FormatError("checkpoint: duplicate entry name " + e.name + " in " + path);
        }
        const std::uint32_t ndims = read_u32(is);
        std::uint64_t prod = 1;
        for (std::uint32_t d = 0; d < ndims; ++d) {
            e.dims.push_back(read_u32(is));
            prod *= e.dims.back();
        }
        e.data.resize(prod);
        for (std::uint64_t k = 0; k < prod; ++k) e.data[k] = read_f32(is);
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

Checkpoint checkpoint_from_model(Model& model, const OptimizerState* opt) {
    Checkpoint ckpt;
    {
        const auto scalars = run_config_to_scalars(model.cfg);
        push_split_entry(ckpt, "__config__", {static_cast<std::uint32_t>(scalars.size())}, scalars);
    }
    auto params = model.named_params();
    for (auto& [name, t] : params) {
        push_split_entry(ckpt, name, tensor_dims(t), t.values());
    }
    if (opt) {
        if (opt->velocity.size() != params.size()) {
            throw ContractError("checkpoint: optimizer velocity not aligned with parameters");
        }
        push_split_entry(ckpt, "__opt__/iter", {1}, {static_cast<double>(opt->iter)});
        for (std::size_t i = 0; i < params.size(); ++i) {
            push_split_entry(ckpt, "__opt__/velocity/" + params[i].first,
                             tensor_dims(params[i].second), opt->velocity[i]);
        }
    }
    return ckpt;
}

namespace {

// Reassembles doubles from a (hi, mid, lo) entry triple; plain f32 when
// the aux entries are absent.
std::vector<double> reconstruct(const std::map<std::string, const CheckpointEntry*>& index,
                                const std::string& name) {
    const CheckpointEntry& hi = *index.at(name);
    std::vector<double> out(hi.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(hi.data[i]);
    auto mid = index.find(name + "@mid");
    auto lo = index.find(name + "@lo");
    if (mid != index.end()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += static_cast<double>(mid->second->data[i]);
    }
    if (lo != index.end()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += static_cast<double>(lo->second->data[i]);
    }
    return out;
}

bool is_auxiliary(const std::string& name) {
    return name.ends_with("@mid") || name.ends_with("@lo") || name.rfind("__", 0) == 0;
}

}  // namespace

RunConfig config_from_checkpoint(const Checkpoint& ckpt) {
    std::map<std::string, const CheckpointEntry*> index;
    for (const auto& e : ckpt.entries) index[e.name] = &e;
    if (!index.count("__config__")) throw FormatError("checkpoint has no embedded config");
    return run_config_from_scalars(reconstruct(index, "__config__"));
}

void load_into_model(const Checkpoint& ckpt, Model& model, OptimizerState* opt) {
    std::map<std::string, const CheckpointEntry*> index;
    for (const auto& e : ckpt.entries) index[e.name] = &e;

    auto params = model.named_params();
    std::vector<std::string> missing, extra;
    std::set<std::string> wanted;
    for (const auto& [name, t] : params) {
        wanted.insert(name);
        if (!index.count(name)) missing.push_back(name);
    }
    for (const auto& e : ckpt.entries) {
        if (is_auxiliary(e.name)) continue;
        if (!wanted.count(e.name)) extra.push_back(e.name);
    }
    if (!missing.empty() || !extra.empty()) {
        std::ostringstream os;
        os << "checkpoint/architecture mismatch;";
        if (!missing.empty()) {
            os << " missing:";
            for (const auto& n : missing) os << " " << n;
        }
        if (!extra.empty()) {
            os << " extra:";
            for (const auto& n : extra) os << " " << n;
        }
        throw ConfigError(os.str());
    }

    for (auto& [name, t] : params) {
        const CheckpointEntry& e = *index.at(name);
        if (static_cast<std::int64_t>(e.data.size()) != t.numel()) {
            throw ConfigError("checkpoint entry " + name + " has wrong size");
        }
        t.values() = reconstruct(index, name);
    }
    if (opt) {
        opt->init_velocity([&] {
            std::vector<Tensor> ts;
            for (auto& [n, t] : params) ts.push_back(t);
            return ts;
        }());
        if (index.count("__opt__/iter")) {
            opt->iter = static_cast<std::int64_t>(reconstruct(index, "__opt__/iter")[0]);
            for (std::size_t i = 0; i < params.size(); ++i) {
                const std::string vname = "__opt__/velocity/" + params[i].first;
                if (!index.count(vname)) {
                    throw ConfigError("checkpoint missing optimizer state: " + vname);
                }
                opt->velocity[i] = reconstruct(index, vname);
            }
        }
    }
}

}  // namespace docsegtr
