// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairmib/csr.hpp"
#include "fairmib/matrix.hpp"

namespace fairmib {

// Immutable attributed graph with a binary sensitive attribute, binary labels
// and optional train/val/test masks. Construction validates the invariants;
// afterwards instances are safe to share across threads. Operations that
// "modify" a dataset return a new value.
struct GraphDataset {
    int n = 0;        // node count
    int64_t m = 0;    // undirected edge count
    CsrMatrix adjacency;  // symmetric, zero diagonal, all stored values 1
    Matrix features;      // n x d
    std::vector<int> sensitive;  // {0,1}, length n
    std::vector<int> labels;     // {0,1}, length n
    std::vector<uint8_t> train_mask, val_mask, test_mask;  // empty until split
    // Column of `features` that replicates `sensitive`, or -1 when the
    // attribute is not embedded in the feature matrix.
    int sensitive_column_index = -1;

    int dim() const { return features.cols; }
    bool has_masks() const { return !train_mask.empty(); }

    // Checks every structural invariant; throws ValidationError on the first
    // violation.
    void validate() const;
};

struct SplitSpec {
    double train_fraction = 0.5;
    double val_fraction = 0.25;
    double test_fraction = 0.25;
    uint64_t seed = 0;

    void validate() const;  // fractions in (0,1) summing to 1 within 1e-9
};

// Stochastic-block-model generator over the four (sensitive, label) cells.
// Cell order: (s=0,y=0), (s=0,y=1), (s=1,y=0), (s=1,y=1).
struct SynthSpec {
    std::array<int, 4> cell_sizes = {100, 100, 100, 100};
    double intra_cell_edge_prob = 0.05;
    double cross_cell_edge_prob = 0.005;
    int feature_dim = 8;  // total columns of X, including the sensitive column
    double group_mean_shift = 1.0;
    double class_mean_shift = 1.0;
    double noise_scale = 1.0;
    uint64_t seed = 0;

    void validate() const;
};

struct NodeSchema {
    std::string sensitive_column = "sensitive";
    std::string label_column = "label";
    // Explicit feature column list; empty means "every other column, in file
    // order". Listing the sensitive column here embeds it into X and records
    // its position in sensitive_column_index.
    std::vector<std::string> feature_columns;
};

// Reads a node CSV (header row) plus a `u v` edge list. Self loops are
// dropped, duplicate/reversed edges are collapsed and the adjacency is
// symmetrized.
GraphDataset load_dataset(const std::string& node_file, const std::string& edge_file,
                          const NodeSchema& schema = {});

// Symmetric degree-normalized adjacency with unit self loops: every stored
// entry of A+I becomes 1/sqrt(deg(i) * deg(j)) with deg the A+I row degree.
// Isolated nodes keep a lone diagonal 1.
CsrMatrix normalize_adjacency(const GraphDataset& g);

// Seeded stratified split over the (sensitive, label) cells: every nonempty
// cell contributes at least one training node, every node lands in exactly
// one mask, identical seeds give identical masks. Empty cells only warn.
GraphDataset make_splits(const GraphDataset& g, const SplitSpec& spec);

GraphDataset gen_synthetic(const SynthSpec& spec);

// Canonical on-disk bundle: <dir>/nodes.csv, <dir>/edges.txt, <dir>/meta.json.
// The meta file records n, m, d, sensitive_column_index and the split spec
// (when the dataset was split), so load_bundle reproduces the masks exactly.
void save_bundle(const GraphDataset& g, const std::string& dir,
                 const std::optional<SplitSpec>& split = std::nullopt);
GraphDataset load_bundle(const std::string& dir);

}  // namespace fairmib
