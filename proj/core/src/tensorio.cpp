#include "specprune/tensorio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <regex>
#include <set>

namespace specprune {

using ordered_json = nlohmann::ordered_json;

bool format_from_name(const std::string & name, Format & out) {
    if (name == "safetensors") { out = Format::safetensors; return true; }
    if (name == "rawbin") { out = Format::rawbin; return true; }
    return false;
}

const char * format_name(Format fmt) {
    return fmt == Format::safetensors ? "safetensors" : "rawbin";
}

void WeightStore::add(const std::string & name, TensorEntry entry) {
    if (contains(name)) {
        throw_data("duplicate tensor name: " + name);
    }
    if (entry.shape.empty()) {
        throw_data("tensor '" + name + "' has an empty shape");
    }
    for (std::size_t extent : entry.shape) {
        if (extent == 0) {
            throw_data("tensor '" + name + "' has a zero extent");
        }
    }
    if (entry.data.size() != entry.numel()) {
        throw_data("tensor '" + name + "' buffer length " + std::to_string(entry.data.size()) +
                   " does not match shape product " + std::to_string(entry.numel()));
    }
    index_[name] = order_.size();
    order_.push_back(name);
    entries_.emplace(name, std::move(entry));
}

const TensorEntry & WeightStore::at(const std::string & name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw_data("no tensor named '" + name + "' in store");
    }
    return it->second;
}

TensorEntry & WeightStore::at(const std::string & name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw_data("no tensor named '" + name + "' in store");
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// file helpers

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw_data("cannot open file: " + path.string());
    }
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(size);
    if (size > 0) {
        in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(size));
    }
    if (!in) {
        throw_data("short read on file: " + path.string());
    }
    return buf;
}

std::uint64_t read_u64_le(const std::uint8_t * p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | p[i];
    }
    return v;
}

void append_u64_le(std::vector<std::uint8_t> & out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

// Scan the top-level keys of a JSON object, tracking byte offsets, so
// duplicate tensor names can be reported precisely. Assumes `text` is
// syntactically valid JSON (checked separately by the full parser).
std::vector<std::pair<std::string, std::size_t>> scan_toplevel_keys(const std::string & text) {
    std::vector<std::pair<std::string, std::size_t>> keys;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    std::string current;
    std::size_t current_off = 0;
    bool capturing = false;

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
                if (capturing) current.push_back(c);
            } else if (c == '\\') {
                escaped = true;
                if (capturing) current.push_back(c);
            } else if (c == '"') {
                in_string = false;
            } else if (capturing) {
                current.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_string = true;
                if (depth == 1) {
                    // a string at depth 1 is a key iff the next non-space char is ':'
                    capturing = true;
                    current.clear();
                    current_off = i;
                }
                break;
            case ':':
                if (depth == 1 && capturing) {
                    keys.emplace_back(current, current_off);
                    capturing = false;
                }
                break;
            case ',':
                capturing = false;
                break;
            case '{':
            case '[':
                ++depth;
                break;
            case '}':
            case ']':
                --depth;
                break;
            default:
                break;
        }
    }
    return keys;
}

} // namespace

void write_file_atomic(const std::filesystem::path & path, const void * data, std::size_t size) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw_data("cannot open for writing: " + tmp.string());
        }
        if (size > 0) {
            out.write(static_cast<const char *>(data), static_cast<std::streamsize>(size));
        }
        if (!out) {
            throw_data("short write on file: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw_data("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

// ---------------------------------------------------------------------------
// safetensors
//
// Layout: 8-byte little-endian header length N, then N bytes of UTF-8 JSON
// ({name: {dtype, shape, data_offsets}}), then the contiguous data region.
// Offsets are relative to the start of the data region. "__metadata__" is
// accepted and ignored.

namespace {

WeightStore load_safetensors(const std::filesystem::path & path) {
    const auto file = read_file(path);
    if (file.size() < 8) {
        throw_data("malformed header in " + path.string() + ": file shorter than 8 bytes (offset 0)");
    }
    const std::uint64_t header_len = read_u64_le(file.data());
    if (header_len > file.size() - 8) {
        throw_data("malformed header in " + path.string() + ": header length " + std::to_string(header_len) +
                   " exceeds file size " + std::to_string(file.size()) + " (offset 0)");
    }
    const std::string header(reinterpret_cast<const char *>(file.data() + 8), header_len);
    const std::size_t data_base = 8 + header_len;
    const std::size_t data_size = file.size() - data_base;

    ordered_json doc;
    try {
        doc = ordered_json::parse(header);
    } catch (const std::exception & e) {
        throw_data("malformed header in " + path.string() + ": " + e.what() + " (offset 8)");
    }
    if (!doc.is_object()) {
        throw_data("malformed header in " + path.string() + ": top level is not an object (offset 8)");
    }

    // nlohmann silently collapses duplicate keys, so scan for them ourselves.
    std::set<std::string> seen;
    for (const auto & [key, off] : scan_toplevel_keys(header)) {
        if (!seen.insert(key).second) {
            throw_data("duplicate tensor name '" + key + "' in " + path.string() +
                       " (offset " + std::to_string(8 + off) + ")");
        }
    }

    WeightStore store;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string & name = it.key();
        if (name == "__metadata__") {
            continue;
        }
        const ordered_json & info = it.value();
        if (!info.is_object() || !info.contains("dtype") || !info.contains("shape") ||
            !info.contains("data_offsets")) {
            throw_data("malformed header entry for '" + name + "' in " + path.string() + " (offset 8)");
        }
        DType dt;
        const std::string tag = info["dtype"].get<std::string>();
        if (!dtype_from_tag(tag, dt)) {
            throw_data("unsupported dtype '" + tag + "' for tensor '" + name + "' in " + path.string() +
                       " (offset 8)");
        }
        TensorEntry entry;
        entry.dtype = dt;
        for (const auto & extent : info["shape"]) {
            entry.shape.push_back(extent.get<std::size_t>());
        }
        const auto & offs = info["data_offsets"];
        if (!offs.is_array() || offs.size() != 2) {
            throw_data("malformed data_offsets for '" + name + "' in " + path.string());
        }
        const std::uint64_t begin = offs[0].get<std::uint64_t>();
        const std::uint64_t end = offs[1].get<std::uint64_t>();
        const std::size_t numel = entry.shape.empty() ? 0 : entry.numel();
        const std::size_t expect = numel * dtype_size(dt);
        if (end < begin || end - begin != expect) {
            throw_data("data_offsets [" + std::to_string(begin) + "," + std::to_string(end) +
                       ") for '" + name + "' do not match shape (expected " + std::to_string(expect) +
                       " bytes) in " + path.string());
        }
        if (end > data_size) {
            throw_data("truncated data section: tensor '" + name + "' ends at offset " +
                       std::to_string(data_base + end) + " beyond file size " + std::to_string(file.size()) +
                       " in " + path.string());
        }
        const std::uint8_t * src = file.data() + data_base + begin;
        entry.data.resize(numel);
        switch (dt) {
            case DType::f32:
                std::memcpy(entry.data.data(), src, expect);
                break;
            case DType::f16:
                for (std::size_t i = 0; i < numel; ++i) {
                    std::uint16_t bits;
                    std::memcpy(&bits, src + 2 * i, 2);
                    entry.data[i] = f16_bits_to_f32(bits);
                }
                break;
            case DType::bf16:
                for (std::size_t i = 0; i < numel; ++i) {
                    std::uint16_t bits;
                    std::memcpy(&bits, src + 2 * i, 2);
                    entry.data[i] = bf16_bits_to_f32(bits);
                }
                break;
        }
        store.add(name, std::move(entry));
    }
    return store;
}

void save_safetensors(const WeightStore & store, const std::filesystem::path & path) {
    ordered_json header = ordered_json::object();
    std::uint64_t offset = 0;
    for (const auto & name : store.names()) {
        const TensorEntry & entry = store.at(name);
        const std::uint64_t nbytes = entry.numel() * dtype_size(entry.dtype);
        ordered_json info;
        info["dtype"] = dtype_tag(entry.dtype);
        info["shape"] = entry.shape;
        info["data_offsets"] = {offset, offset + nbytes};
        header[name] = std::move(info);
        offset += nbytes;
    }
    const std::string header_str = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(8 + header_str.size() + offset);
    append_u64_le(out, header_str.size());
    out.insert(out.end(), header_str.begin(), header_str.end());
    for (const auto & name : store.names()) {
        const TensorEntry & entry = store.at(name);
        switch (entry.dtype) {
            case DType::f32: {
                const auto * p = reinterpret_cast<const std::uint8_t *>(entry.data.data());
                out.insert(out.end(), p, p + entry.data.size() * 4);
                break;
            }
            case DType::f16:
                for (float v : entry.data) {
                    const std::uint16_t bits = f32_to_f16_bits(v);
                    out.push_back(static_cast<std::uint8_t>(bits & 0xFF));
                    out.push_back(static_cast<std::uint8_t>(bits >> 8));
                }
                break;
            case DType::bf16:
                for (float v : entry.data) {
                    const std::uint16_t bits = f32_to_bf16_bits(v);
                    out.push_back(static_cast<std::uint8_t>(bits & 0xFF));
                    out.push_back(static_cast<std::uint8_t>(bits >> 8));
                }
                break;
        }
    }
    write_file_atomic(path, out.data(), out.size());
}

// ---------------------------------------------------------------------------
// rawbin: JSON manifest + one little-endian f32 row-major blob per tensor.
// The storage type is always f32, so only f32 stores are representable.

WeightStore load_rawbin(const std::filesystem::path & manifest_path) {
    const auto manifest_bytes = read_file(manifest_path);
    ordered_json doc;
    try {
        doc = ordered_json::parse(manifest_bytes.begin(), manifest_bytes.end());
    } catch (const std::exception & e) {
        throw_data("malformed rawbin manifest " + manifest_path.string() + ": " + e.what() + " (offset 0)");
    }
    if (!doc.is_object() || !doc.contains("tensors") || !doc["tensors"].is_array()) {
        throw_data("malformed rawbin manifest " + manifest_path.string() + ": expected {\"tensors\": [...]}");
    }
    const auto dir = manifest_path.parent_path();
    WeightStore store;
    for (const auto & item : doc["tensors"]) {
        if (!item.contains("name") || !item.contains("shape") || !item.contains("dtype") ||
            !item.contains("file")) {
            throw_data("rawbin manifest entry missing name/shape/dtype/file in " + manifest_path.string());
        }
        const std::string name = item["name"].get<std::string>();
        DType dt;
        if (!dtype_from_name(item["dtype"].get<std::string>(), dt) || dt != DType::f32) {
            throw_data("unsupported dtype '" + item["dtype"].get<std::string>() + "' for tensor '" + name +
                       "' in rawbin manifest (rawbin stores f32 only)");
        }
        TensorEntry entry;
        entry.dtype = DType::f32;
        for (const auto & extent : item["shape"]) {
            entry.shape.push_back(extent.get<std::size_t>());
        }
        const auto blob_path = dir / item["file"].get<std::string>();
        const auto blob = read_file(blob_path);
        const std::size_t expect = entry.numel() * 4;
        if (blob.size() != expect) {
            throw_data("truncated data section: blob " + blob_path.string() + " is " +
                       std::to_string(blob.size()) + " bytes, expected " + std::to_string(expect) +
                       " (offset " + std::to_string(std::min(blob.size(), expect)) + ")");
        }
        entry.data.resize(entry.numel());
        std::memcpy(entry.data.data(), blob.data(), expect);
        store.add(name, std::move(entry));
    }
    return store;
}

std::string rawbin_blob_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "tensor_%04zu.bin", index);
    return buf;
}

void save_rawbin(const WeightStore & store, const std::filesystem::path & manifest_path) {
    for (const auto & name : store.names()) {
        if (store.at(name).dtype != DType::f32) {
            throw_data("dtype " + std::string(dtype_name(store.at(name).dtype)) +
                       " not representable in rawbin (tensor '" + name + "')");
        }
    }
    const auto dir = manifest_path.parent_path();
    ordered_json manifest;
    manifest["tensors"] = ordered_json::array();
    std::size_t index = 0;
    for (const auto & name : store.names()) {
        const TensorEntry & entry = store.at(name);
        const std::string blob_name = rawbin_blob_name(index++);
        write_file_atomic(dir / blob_name, entry.data.data(), entry.data.size() * 4);
        ordered_json item;
        item["name"] = name;
        item["shape"] = entry.shape;
        item["dtype"] = "f32";
        item["file"] = blob_name;
        manifest["tensors"].push_back(std::move(item));
    }
    const std::string text = manifest.dump(2);
    write_file_atomic(manifest_path, text.data(), text.size());
}

} // namespace

WeightStore load_checkpoint(const std::filesystem::path & path, Format format) {
    return format == Format::safetensors ? load_safetensors(path) : load_rawbin(path);
}

void save_checkpoint(const WeightStore & store, const std::filesystem::path & path, Format format) {
    if (format == Format::safetensors) {
        save_safetensors(store, path);
    } else {
        save_rawbin(store, path);
    }
}

// ---------------------------------------------------------------------------
// block grouping

GroupingRules llama_grouping_preset() {
    return GroupingRules{
        "model.layers.{i}.",
        {"model.embed_tokens*", "model.norm*", "lm_head*", "model.rotary*"},
    };
}

GroupingRules gpt2_grouping_preset() {
    return GroupingRules{
        "h.{i}.",
        {"wte*", "wpe*", "ln_f*", "lm_head*"},
    };
}

GroupingRules load_grouping_rules(const std::filesystem::path & path) {
    const auto bytes = read_file(path);
    ordered_json doc;
    try {
        doc = ordered_json::parse(bytes.begin(), bytes.end());
    } catch (const std::exception & e) {
        throw_data("malformed grouping rules file " + path.string() + ": " + e.what());
    }
    if (!doc.contains("block_pattern")) {
        throw_data("grouping rules file " + path.string() + " missing \"block_pattern\"");
    }
    GroupingRules rules;
    rules.block_pattern = doc["block_pattern"].get<std::string>();
    if (doc.contains("exclude_patterns")) {
        for (const auto & p : doc["exclude_patterns"]) {
            rules.exclude_patterns.push_back(p.get<std::string>());
        }
    }
    return rules;
}

GroupingRules resolve_grouping(const std::string & preset_or_path) {
    if (preset_or_path == "llama") {
        return llama_grouping_preset();
    }
    if (preset_or_path == "gpt2") {
        return gpt2_grouping_preset();
    }
    return load_grouping_rules(preset_or_path);
}

namespace {

// Translate a glob-ish pattern to a ^-anchored regex. "{i}" captures the
// block index; "*" matches any run.
std::regex pattern_to_regex(const std::string & pattern, bool expect_index) {
    std::string re = "^";
    bool saw_index = false;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern.compare(i, 3, "{i}") == 0) {
            re += "([0-9]+)";
            saw_index = true;
            i += 2;
        } else if (pattern[i] == '*') {
            re += ".*";
        } else if (std::strchr("\\^$.|?+()[]{}", pattern[i]) != nullptr) {
            re += '\\';
            re += pattern[i];
        } else {
            re += pattern[i];
        }
    }
    if (expect_index && !saw_index) {
        throw_data("block pattern '" + pattern + "' has no {i} placeholder");
    }
    return std::regex(re);
}

} // namespace

BlockGrouping group_blocks(const WeightStore & store, const GroupingRules & rules,
                           std::vector<std::string> * warnings) {
    const std::regex block_re = pattern_to_regex(rules.block_pattern, true);
    std::vector<std::regex> exclude_res;
    exclude_res.reserve(rules.exclude_patterns.size());
    for (const auto & pat : rules.exclude_patterns) {
        exclude_res.push_back(pattern_to_regex(pat, false));
    }

    std::map<int, std::vector<std::string>> by_index;
    std::vector<std::string> ungrouped;

    std::vector<std::string> sorted_names = store.names();
    std::sort(sorted_names.begin(), sorted_names.end());

    for (const auto & name : sorted_names) {
        const TensorEntry & entry = store.at(name);
        if (!entry.is_matrix()) {
            ungrouped.push_back(name); // 1-D / N-D tensors are never analyzed or pruned
            continue;
        }
        bool excluded = false;
        for (const auto & re : exclude_res) {
            if (std::regex_search(name, re)) {
                excluded = true;
                break;
            }
        }
        if (excluded) {
            ungrouped.push_back(name);
            continue;
        }
        std::smatch m;
        if (std::regex_search(name, m, block_re)) {
            by_index[std::stoi(m[1].str())].push_back(name);
        } else {
            if (warnings != nullptr) {
                warnings->push_back("2-D tensor '" + name + "' matches no grouping rule; left ungrouped");
            }
            ungrouped.push_back(name);
        }
    }

    BlockGrouping grouping;
    int expected = 0;
    for (auto & [index, names] : by_index) {
        if (index != expected) {
            throw_data("non-contiguous block indices: expected block " + std::to_string(expected) +
                       ", found block " + std::to_string(index));
        }
        ++expected;
        grouping.blocks.push_back(BlockGrouping::Block{index, std::move(names)});
    }
    grouping.ungrouped = std::move(ungrouped);
    return grouping;
}

} // namespace specprune
