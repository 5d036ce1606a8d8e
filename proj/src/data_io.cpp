#include "rsanet/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rsanet/prng.hpp"

namespace rsanet {

std::vector<std::pair<int, int>> make_pairs(int n, bool both_orders) {
    if (n < 2) throw ValueError("pair enumeration needs n >= 2");
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<size_t>(n) * (n - 1) / (both_orders ? 1 : 2));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    if (both_orders) {
        const size_t half = pairs.size();
        for (size_t k = 0; k < half; ++k) pairs.emplace_back(pairs[k].second, pairs[k].first);
    }
    return pairs;
}

Dataset make_dataset(std::vector<Tensor> images, Rdm normalized_target, bool both_orders) {
    if (static_cast<int>(images.size()) != normalized_target.size()) {
        throw DataError("image count " + std::to_string(images.size()) + " does not match RDM size " +
                        std::to_string(normalized_target.size()));
    }
    for (const auto& img : images)
        if (img.shape != images.front().shape) throw DataError("images must share one shape");
    Dataset ds{std::move(images), std::move(normalized_target), {}};
    for (const auto& [i, j] : make_pairs(static_cast<int>(ds.images.size()), both_orders)) {
        ds.pairs.push_back({i, j, static_cast<float>(ds.target(i, j))});
    }
    return ds;
}

// --- RDM CSV -------------------------------------------------------------

Rdm parse_rdm_csv(const std::string& text) {
    std::vector<std::vector<double>> rows;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = eol + 1;
        if (line.empty()) continue;
        std::vector<double> row;
        size_t cell_start = 0;
        for (size_t c = 0; c <= line.size(); ++c) {
            if (c == line.size() || line[c] == ',') {
                const std::string cell(line.substr(cell_start, c - cell_start));
                cell_start = c + 1;
                char* end = nullptr;
                errno = 0;
                const double v = std::strtod(cell.c_str(), &end);
                while (end && *end == ' ') ++end;
                if (cell.empty() || end == cell.c_str() || (end && *end != '\0')) {
                    throw FormatError("RDM csv: non-numeric cell '" + cell + "'");
                }
                if (!std::isfinite(v)) throw FormatError("RDM csv: non-finite cell '" + cell + "'");
                row.push_back(v);
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.size() < 2) throw FormatError("RDM csv: need at least 2 rows");
    const size_t n = rows.size();
    Eigen::MatrixXd m(n, n);
    for (size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n) {
            throw FormatError("RDM csv: row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                              " cells, expected " + std::to_string(n));
        }
        for (size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    try {
        return Rdm(std::move(m));
    } catch (const ValueError& e) {
        throw FormatError(std::string("RDM csv: ") + e.what());
    }
}

Rdm load_rdm_csv(const std::string& path) {
    const auto bytes = read_file(path);
    return parse_rdm_csv(std::string(bytes.begin(), bytes.end()));
}

std::string rdm_csv_bytes(const Rdm& rdm) {
    std::string out;
    char buf[40];
    const int n = rdm.size();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", rdm(i, j));
            if (j) out += ',';
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void write_rdm_csv(const std::string& path, const Rdm& rdm) { write_file(path, rdm_csv_bytes(rdm)); }

// --- binary primitives ----------------------------------------------------

namespace {

struct Cursor {
    const uint8_t* data;
    size_t len;
    size_t pos = 0;

    size_t remaining() const { return len - pos; }

    void need(size_t bytes, const char* what) {
        if (remaining() < bytes) throw FormatError(std::string("truncated ") + what);
    }

    uint16_t u16(const char* what) {
        need(2, what);
        const uint16_t v = static_cast<uint16_t>(data[pos]) | static_cast<uint16_t>(data[pos + 1]) << 8;
        pos += 2;
        return v;
    }

    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | data[pos + static_cast<size_t>(i)];
        pos += 4;
        return v;
    }
};

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float f) { put_u32(out, std::bit_cast<uint32_t>(f)); }

constexpr char kTensorMagic[4] = {'T', 'S', 'R', '1'};
constexpr int kMaxDims = 8;

Tensor parse_tensor_at(Cursor& cur) {
    cur.need(4, "tensor magic");
    if (std::memcmp(cur.data + cur.pos, kTensorMagic, 4) != 0) throw FormatError("bad tensor magic");
    cur.pos += 4;
    const uint32_t ndim = cur.u32("tensor ndim");
    if (ndim == 0 || ndim > kMaxDims) throw FormatError("tensor ndim " + std::to_string(ndim) + " out of range");
    std::vector<int> shape;
    uint64_t count = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
        const uint32_t dim = cur.u32("tensor dims");
        if (dim == 0 || dim > 0x7fffffffu) throw FormatError("tensor dimension out of range");
        count *= dim;
        if (count > (uint64_t{1} << 31)) throw FormatError("tensor too large");
        shape.push_back(static_cast<int>(dim));
    }
    cur.need(count * 4, "tensor payload");
    Tensor t(shape);
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t bits = 0;
        for (int b = 3; b >= 0; --b) bits = (bits << 8) | cur.data[cur.pos + i * 4 + static_cast<uint64_t>(b)];
        t.data[static_cast<size_t>(i)] = std::bit_cast<float>(bits);
    }
    cur.pos += count * 4;
    return t;
}

void append_tensor(std::vector<uint8_t>& out, const Tensor& t) {
    out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
    if (t.ndim() > kMaxDims) throw ValueError("tensor has more than 8 dimensions");
    put_u32(out, static_cast<uint32_t>(t.ndim()));
    for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
    for (float f : t.data) put_f32(out, f);
}

}  // namespace

Tensor parse_tensor(const uint8_t* data, size_t len) {
    Cursor cur{data, len};
    Tensor t = parse_tensor_at(cur);
    if (cur.remaining() != 0) {
        throw FormatError("trailing bytes after tensor payload: " + std::to_string(cur.remaining()));
    }
    return t;
}

std::vector<uint8_t> tensor_bytes(const Tensor& t) {
    std::vector<uint8_t> out;
    out.reserve(8 + t.data.size() * 4 + t.shape.size() * 4);
    append_tensor(out, t);
    return out;
}

Tensor load_tensor(const std::string& path) {
    const auto bytes = read_file(path);
    return parse_tensor(bytes.data(), bytes.size());
}

void save_tensor(const std::string& path, const Tensor& t) {
    const auto bytes = tensor_bytes(t);
    write_file(path, bytes.data(), bytes.size());
}

std::map<std::string, Tensor> parse_weights(const uint8_t* data, size_t len) {
    Cursor cur{data, len};
    const uint32_t count = cur.u32("weight entry count");
    std::map<std::string, Tensor> named;
    for (uint32_t e = 0; e < count; ++e) {
        const uint16_t name_len = cur.u16("weight entry name length");
        cur.need(name_len, "weight entry name");
        std::string name(reinterpret_cast<const char*>(cur.data + cur.pos), name_len);
        cur.pos += name_len;
        if (name.empty() || name.find('\0') != std::string::npos) {
            throw FormatError("weight entry name empty or contains NUL");
        }
        Tensor t = parse_tensor_at(cur);
        if (!named.emplace(std::move(name), std::move(t)).second) {
            throw FormatError("duplicate weight entry name");
        }
    }
    if (cur.remaining() != 0) throw FormatError("trailing bytes after weight entries");
    return named;
}

std::vector<uint8_t> weights_bytes(const std::map<std::string, Tensor>& named) {
    // std::map iterates in ascending name order, which is the canonical layout
    std::vector<uint8_t> out;
    put_u32(out, static_cast<uint32_t>(named.size()));
    for (const auto& [name, tensor] : named) {
        if (name.size() > 0xffff) throw ValueError("weight entry name too long");
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        append_tensor(out, tensor);
    }
    return out;
}

std::map<std::string, Tensor> load_weights(const std::string& path) {
    const auto bytes = read_file(path);
    return parse_weights(bytes.data(), bytes.size());
}

void save_weights(const std::string& path, const std::map<std::string, Tensor>& named) {
    const auto bytes = weights_bytes(named);
    write_file(path, bytes.data(), bytes.size());
}

// --- batching --------------------------------------------------------------

std::vector<std::vector<int>> epoch_batches(int n_pairs, int batch_size, uint64_t seed, int64_t epoch,
                                            bool shuffle) {
    if (n_pairs < 1) throw ValueError("epoch_batches over an empty pair list");
    if (batch_size < 1) throw ValueError("batch size must be >= 1");
    std::vector<int> perm(static_cast<size_t>(n_pairs));
    for (int i = 0; i < n_pairs; ++i) perm[static_cast<size_t>(i)] = i;
    if (shuffle) {
        Xoshiro256ss rng(mix_seed(seed, static_cast<uint64_t>(epoch)));
        for (int i = n_pairs - 1; i > 0; --i) {
            const auto j = static_cast<int>(rng.below(static_cast<uint64_t>(i) + 1));
            std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
        }
    }
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n_pairs; start += batch_size) {
        const int end = std::min(n_pairs, start + batch_size);
        batches.emplace_back(perm.begin() + start, perm.begin() + end);
    }
    return batches;
}

// --- filesystem -------------------------------------------------------------

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw DataError("read failed: " + path);
    return bytes;
}

void write_file(const std::string& path, const uint8_t* data, size_t len) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) throw DataError("write failed: " + path);
}

void write_file(const std::string& path, const std::string& text) {
    write_file(path, reinterpret_cast<const uint8_t*>(text.data()), text.size());
}

std::vector<std::string> list_dir_sorted(const std::string& dir, const std::string& extension) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == extension) {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace rsanet
