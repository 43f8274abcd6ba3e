#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ufmri/tensor.hpp"

namespace ufmri {

/// Single-file named-array container ("UFNA"). Layout:
///   8-byte magic "UFNA0001", u64-le header length, JSON header, padded blobs.
/// Array dtypes: c8 (complex64), f8, f4, u1, i8. String arrays live in the
/// header itself. Writes are byte-deterministic for identical content.
class NamedArrays {
public:
    struct Entry {
        std::string dtype;
        std::vector<int> shape;
        std::vector<std::uint8_t> bytes;    // raw little-endian payload
        std::vector<std::string> strings;   // only for dtype == "str"
    };

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    std::vector<std::string> keys() const;

    void put_c8(const std::string& name, std::vector<int> shape, const cplx* data);
    void put_f8(const std::string& name, std::vector<int> shape, const double* data);
    void put_u8(const std::string& name, std::vector<int> shape, const std::uint8_t* data);
    void put_i8(const std::string& name, std::vector<int> shape, const std::int64_t* data);
    void put_str(const std::string& name, std::vector<std::string> values);

    void put_ctensor(const std::string& name, const CTensor& t) { put_c8(name, t.shape, t.v.data()); }
    void put_tensor(const std::string& name, const Tensor& t) { put_f8(name, t.shape, t.v.data()); }

    CTensor get_ctensor(const std::string& name) const;          // from c8
    Tensor get_tensor(const std::string& name) const;            // from f8 or f4
    std::vector<std::uint8_t> get_u8(const std::string& name, std::vector<int>* shape = nullptr) const;
    std::vector<std::int64_t> get_i8(const std::string& name) const;
    const std::vector<std::string>& get_str(const std::string& name) const;
    const Entry& entry(const std::string& name) const;

    /// Free-form metadata written into the header (seed, config hash, ...).
    std::map<std::string, std::string> meta;

    void save(const std::string& path) const;
    static NamedArrays load(const std::string& path);

private:
    std::map<std::string, Entry> entries_;
};

} // namespace ufmri
