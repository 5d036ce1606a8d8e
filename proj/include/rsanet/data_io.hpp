#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rsanet/rsa.hpp"
#include "rsanet/tensor.hpp"

namespace rsanet {

// One training sample: an ordered image pair and its target dissimilarity.
struct PairSample {
    int i;
    int j;
    float target;
};

struct Dataset {
    std::vector<Tensor> images;  // uniform shape [C,H,W]
    Rdm target;                  // normalized
    std::vector<PairSample> pairs;
};

// All (i,j) with i<j in ascending row-major order; with both_orders the
// mirrored list follows, so entry k and entry k + n(n-1)/2 are transposes.
std::vector<std::pair<int, int>> make_pairs(int n, bool both_orders);

// Builds the pair list (both orders by default: (i,j) and (j,i) are distinct
// training samples) with targets read from the normalized RDM.
Dataset make_dataset(std::vector<Tensor> images, Rdm normalized_target, bool both_orders = true);

// --- RDM CSV: n lines of n comma-separated decimals ---------------------
Rdm parse_rdm_csv(const std::string& text);
Rdm load_rdm_csv(const std::string& path);
std::string rdm_csv_bytes(const Rdm& rdm);
void write_rdm_csv(const std::string& path, const Rdm& rdm);

// --- TSR1 tensor file: magic "TSR1", u32 LE ndim (1..8), ndim u32 LE dims,
// --- then product(dims) f32 LE values; trailing bytes rejected -----------
Tensor parse_tensor(const uint8_t* data, size_t len);
std::vector<uint8_t> tensor_bytes(const Tensor& t);
Tensor load_tensor(const std::string& path);
void save_tensor(const std::string& path, const Tensor& t);

// --- weight container: u32 LE entry count, then per entry u16 LE name
// --- length, UTF-8 name, embedded TSR1 record; written sorted by name ----
std::map<std::string, Tensor> parse_weights(const uint8_t* data, size_t len);
std::vector<uint8_t> weights_bytes(const std::map<std::string, Tensor>& named);
std::map<std::string, Tensor> load_weights(const std::string& path);
void save_weights(const std::string& path, const std::map<std::string, Tensor>& named);

// Seeded epoch batching over pair indices: Fisher-Yates shuffle driven by
// xoshiro256** seeded with mix_seed(seed, epoch); the final short batch is
// kept. Every index appears exactly once.
std::vector<std::vector<int>> epoch_batches(int n_pairs, int batch_size, uint64_t seed, int64_t epoch,
                                            bool shuffle);

// Filesystem helpers.
std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const uint8_t* data, size_t len);
void write_file(const std::string& path, const std::string& text);
// Regular files under dir with the given extension (e.g. ".tsr"), sorted by
// filename; the sorted order defines the image index order.
std::vector<std::string> list_dir_sorted(const std::string& dir, const std::string& extension);

}  // namespace rsanet
