#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stag/matrix.hpp"

namespace stag {

struct Param {
    std::string name;
    Matrix value;
    bool tunable = false;
};

// All model parameters, partitioned into frozen and tunable, in a stable
// insertion order. Names are unique; sharing is expressed by several model
// sites referring to one named entry.
class ParamStore {
public:
    int add(const std::string& name, Matrix value, bool tunable);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    int index_of(const std::string& name) const;

    Param& at(int i) { return params_[static_cast<std::size_t>(i)]; }
    const Param& at(int i) const { return params_[static_cast<std::size_t>(i)]; }
    Param& at(const std::string& name) { return params_[static_cast<std::size_t>(index_of(name))]; }
    const Param& at(const std::string& name) const {
        return params_[static_cast<std::size_t>(index_of(name))];
    }

    int size() const { return static_cast<int>(params_.size()); }
    const std::vector<Param>& items() const { return params_; }

    std::vector<std::string> tunable_names() const;
    std::int64_t count_elements(bool tunable_only) const;

    // FNV-1a over names, shapes, and value bit patterns of the selected
    // subset; used to assert the frozen-parameter conservation contract.
    std::uint64_t content_hash(bool frozen_only) const;

private:
    std::vector<Param> params_;
    std::map<std::string, int> index_;
};

// Flat binary weight file: magic "STAGW1", one precision byte (0 single,
// 1 double), then per parameter: u32 name length, name bytes, u32 rows,
// u32 cols, rows*cols little-endian values at the file precision.
void save_params(const std::string& path,
                 const std::vector<std::pair<std::string, Matrix>>& records, Precision prec);
std::vector<std::pair<std::string, Matrix>> load_params(const std::string& path);

}  // namespace stag
