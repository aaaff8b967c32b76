#pragma once

#include "specprune/dtype.hpp"
#include "specprune/error.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace specprune {

enum class Format { safetensors, rawbin };

bool format_from_name(const std::string & name, Format & out);
const char * format_name(Format fmt);

/// One named tensor. Data is materialized as f32 row-major regardless of the
/// on-disk dtype (f16/bf16 expansion is exact); the original dtype is kept so
/// saves reproduce the input bit patterns.
struct TensorEntry {
    std::vector<std::size_t> shape;
    DType dtype = DType::f32;
    std::vector<float> data;

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t extent : shape) {
            n *= extent;
        }
        return n;
    }
    bool is_matrix() const { return shape.size() == 2; }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }
};

/// Ordered collection of uniquely named tensors.
class WeightStore {
public:
    void add(const std::string & name, TensorEntry entry);

    bool contains(const std::string & name) const { return index_.count(name) != 0; }
    const TensorEntry & at(const std::string & name) const;
    TensorEntry & at(const std::string & name);

    /// Names in insertion (file) order.
    const std::vector<std::string> & names() const { return order_; }
    std::size_t size() const { return order_.size(); }
    bool empty() const { return order_.empty(); }

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, TensorEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Grouping of 2-D weight matrices into transformer blocks. Matrices inside a
/// block and the ungrouped list are sorted by name, so the result does not
/// depend on store insertion order.
struct BlockGrouping {
    struct Block {
        int index = 0;
        std::vector<std::string> matrix_names;
    };
    std::vector<Block> blocks; // ascending, contiguous indices starting at 0
    std::vector<std::string> ungrouped;

    std::size_t grouped_count() const {
        std::size_t n = 0;
        for (const auto & b : blocks) {
            n += b.matrix_names.size();
        }
        return n;
    }
};

/// Name rules driving group_blocks. block_pattern must contain "{i}" (the
/// block index); "*" matches any run of characters. Patterns are anchored at
/// the start of the tensor name.
struct GroupingRules {
    std::string block_pattern;
    std::vector<std::string> exclude_patterns;
};

GroupingRules llama_grouping_preset();
GroupingRules gpt2_grouping_preset();
GroupingRules load_grouping_rules(const std::filesystem::path & path);

/// Resolve "llama" / "gpt2" to a preset, anything else to a rules file path.
GroupingRules resolve_grouping(const std::string & preset_or_path);

WeightStore load_checkpoint(const std::filesystem::path & path, Format format);
void save_checkpoint(const WeightStore & store, const std::filesystem::path & path, Format format);

BlockGrouping group_blocks(const WeightStore & store, const GroupingRules & rules,
                           std::vector<std::string> * warnings = nullptr);

/// Write-temp-then-rename; partial files never land at `path`.
void write_file_atomic(const std::filesystem::path & path, const void * data, std::size_t size);

} // namespace specprune
