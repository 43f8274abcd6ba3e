#include "ufmri/container.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ufmri {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'U', 'F', 'N', 'A', '0', '0', '0', '1'};

std::size_t dtype_itemsize(const std::string& d) {
    if (d == "c8") return 8;
    if (d == "f8") return 8;
    if (d == "f4") return 4;
    if (d == "u1") return 1;
    if (d == "i8") return 8;
    fail("unknown dtype: " + d);
}

} // namespace

std::vector<std::string> NamedArrays::keys() const {
    std::vector<std::string> k;
    for (const auto& [name, e] : entries_) k.push_back(name);
    return k;
}

void NamedArrays::put_c8(const std::string& name, std::vector<int> shape, const cplx* data) {
    Entry e;
    e.dtype = "c8";
    e.shape = std::move(shape);
    const auto n = shape_numel(e.shape);
    e.bytes.resize(static_cast<std::size_t>(n) * 8);
    auto* f = reinterpret_cast<float*>(e.bytes.data());
    for (std::int64_t i = 0; i < n; ++i) {
        f[2 * i] = static_cast<float>(data[i].real());
        f[2 * i + 1] = static_cast<float>(data[i].imag());
    }
    entries_[name] = std::move(e);
}

void NamedArrays::put_f8(const std::string& name, std::vector<int> shape, const double* data) {
    Entry e;
    e.dtype = "f8";
    e.shape = std::move(shape);
    const auto n = shape_numel(e.shape);
    e.bytes.resize(static_cast<std::size_t>(n) * 8);
    std::memcpy(e.bytes.data(), data, e.bytes.size());
    entries_[name] = std::move(e);
}

void NamedArrays::put_u8(const std::string& name, std::vector<int> shape, const std::uint8_t* data) {
    Entry e;
    e.dtype = "u1";
    e.shape = std::move(shape);
    const auto n = shape_numel(e.shape);
    e.bytes.assign(data, data + n);
    entries_[name] = std::move(e);
}

void NamedArrays::put_i8(const std::string& name, std::vector<int> shape, const std::int64_t* data) {
    Entry e;
    e.dtype = "i8";
    e.shape = std::move(shape);
    const auto n = shape_numel(e.shape);
    e.bytes.resize(static_cast<std::size_t>(n) * 8);
    std::memcpy(e.bytes.data(), data, e.bytes.size());
    entries_[name] = std::move(e);
}

void NamedArrays::put_str(const std::string& name, std::vector<std::string> values) {
    Entry e;
    e.dtype = "str";
    e.shape = {static_cast<int>(values.size())};
    e.strings = std::move(values);
    entries_[name] = std::move(e);
}

const NamedArrays::Entry& NamedArrays::entry(const std::string& name) const {
    auto it = entries_.find(name);
    UFMRI_CHECK(it != entries_.end(), "container: missing array \"" + name + "\"");
    return it->second;
}

CTensor NamedArrays::get_ctensor(const std::string& name) const {
    const Entry& e = entry(name);
    UFMRI_CHECK(e.dtype == "c8", "container: \"" + name + "\" is not complex64");
    CTensor t = CTensor::zeros(e.shape);
    const auto* f = reinterpret_cast<const float*>(e.bytes.data());
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = cplx(f[2 * i], f[2 * i + 1]);
    return t;
}

Tensor NamedArrays::get_tensor(const std::string& name) const {
    const Entry& e = entry(name);
    Tensor t = Tensor::zeros(e.shape);
    if (e.dtype == "f8") {
        std::memcpy(t.v.data(), e.bytes.data(), e.bytes.size());
    } else if (e.dtype == "f4") {
        const auto* f = reinterpret_cast<const float*>(e.bytes.data());
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = f[i];
    } else {
        fail("container: \"" + name + "\" is not a float array");
    }
    return t;
}

std::vector<std::uint8_t> NamedArrays::get_u8(const std::string& name, std::vector<int>* shape) const {
    const Entry& e = entry(name);
    UFMRI_CHECK(e.dtype == "u1", "container: \"" + name + "\" is not uint8");
    if (shape) *shape = e.shape;
    return e.bytes;
}

std::vector<std::int64_t> NamedArrays::get_i8(const std::string& name) const {
    const Entry& e = entry(name);
    UFMRI_CHECK(e.dtype == "i8", "container: \"" + name + "\" is not int64");
    std::vector<std::int64_t> out(static_cast<std::size_t>(shape_numel(e.shape)));
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
}

const std::vector<std::string>& NamedArrays::get_str(const std::string& name) const {
    const Entry& e = entry(name);
    UFMRI_CHECK(e.dtype == "str", "container: \"" + name + "\" is not a string array");
    return e.strings;
}

void NamedArrays::save(const std::string& path) const {
    json index = json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, e] : entries_) {
        json j;
        j["dtype"] = e.dtype;
        j["shape"] = e.shape;
        if (e.dtype == "str") {
            j["values"] = e.strings;
        } else {
            j["offset"] = offset;
            j["nbytes"] = e.bytes.size();
            offset += (e.bytes.size() + 7) / 8 * 8; // 8-byte aligned blobs
        }
        index[name] = std::move(j);
    }
    json header;
    header["arrays"] = std::move(index);
    header["meta"] = meta;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    UFMRI_CHECK(out.good(), "cannot open for writing: " + path);
    out.write(kMagic, 8);
    std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    static const char pad[8] = {0};
    for (const auto& [name, e] : entries_) {
        if (e.dtype == "str") continue;
        out.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
        const std::size_t rem = e.bytes.size() % 8;
        if (rem) out.write(pad, static_cast<std::streamsize>(8 - rem));
    }
    UFMRI_CHECK(out.good(), "write failed: " + path);
}

NamedArrays NamedArrays::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    UFMRI_CHECK(in.good(), "cannot open: " + path);
    char magic[8];
    in.read(magic, 8);
    UFMRI_CHECK(in.good() && std::memcmp(magic, kMagic, 8) == 0, "not a UFNA container: " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    UFMRI_CHECK(in.good(), "truncated container header: " + path);
    json header = json::parse(hs);

    std::vector<std::uint8_t> payload(std::istreambuf_iterator<char>(in), {});

    NamedArrays na;
    for (auto& [k, v] : header.at("meta").items()) na.meta[k] = v.get<std::string>();
    for (auto& [name, j] : header.at("arrays").items()) {
        Entry e;
        e.dtype = j.at("dtype").get<std::string>();
        e.shape = j.at("shape").get<std::vector<int>>();
        if (e.dtype == "str") {
            e.strings = j.at("values").get<std::vector<std::string>>();
        } else {
            const auto off = j.at("offset").get<std::uint64_t>();
            const auto nb = j.at("nbytes").get<std::uint64_t>();
            UFMRI_CHECK(off + nb <= payload.size(), "container blob out of range: " + name);
            UFMRI_CHECK(nb == static_cast<std::uint64_t>(shape_numel(e.shape)) * dtype_itemsize(e.dtype),
                        "container blob size mismatch: " + name);
            e.bytes.assign(payload.begin() + static_cast<std::ptrdiff_t>(off),
                           payload.begin() + static_cast<std::ptrdiff_t>(off + nb));
        }
        na.entries_[name] = std::move(e);
    }
    return na;
}

} // namespace ufmri
