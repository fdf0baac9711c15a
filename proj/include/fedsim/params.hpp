#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedsim {

struct CongruenceError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// One named tensor inside the flat value sequence.
struct Block {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
    std::vector<std::size_t> shape;

    friend bool operator==(const Block&, const Block&) = default;
};

// Ordered block list tiling [0, size()) contiguously and without overlap.
class Layout {
public:
    explicit Layout(std::vector<Block> blocks);

    const std::vector<Block>& blocks() const { return blocks_; }
    std::size_t size() const { return total_; }
    std::size_t block_count() const { return blocks_.size(); }
    const Block& block(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;  // throws if absent

    friend bool operator==(const Layout&, const Layout&) = default;

private:
    std::vector<Block> blocks_;
    std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

class LayoutBuilder {
public:
    LayoutBuilder& add(std::string name, std::vector<std::size_t> shape);
    LayoutPtr build();

private:
    std::vector<Block> blocks_;
    std::size_t offset_ = 0;
};

// Flat real64 parameter/update/gradient storage with named-block metadata.
// Immutable once published to other modules; mutation only by the owner.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(LayoutPtr layout)
        : layout_(std::move(layout)), values_(layout_ ? layout_->size() : 0, 0.0) {}

    const LayoutPtr& layout() const { return layout_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> block(std::string_view name);
    std::span<const double> block(std::string_view name) const;
    std::span<double> block_at(std::size_t index);
    std::span<const double> block_at(std::size_t index) const;

    bool congruent_with(const ParamVector& other) const;

private:
    LayoutPtr layout_;
    std::vector<double> values_;
};

void require_congruent(const ParamVector& a, const ParamVector& b);

// Elementwise algebra. All reductions run in ascending index order.
ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector scale(const ParamVector& a, double c);
ParamVector hadamard(const ParamVector& a, const ParamVector& b);
double dot(const ParamVector& a, const ParamVector& b);
double sq_l2_norm(const ParamVector& a);

void add_in_place(ParamVector& a, const ParamVector& b);
void sub_in_place(ParamVector& a, const ParamVector& b);
void scale_in_place(ParamVector& a, double c);
// a += c * b
void axpy_in_place(ParamVector& a, double c, const ParamVector& b);

// Disjoint cover of blocks; the unit at which meta-parameters live.
struct Partition {
    struct Cell {
        std::string name;
        std::vector<std::string> blocks;
    };
    std::vector<Cell> cells;
};

// One cell per tensor: every block becomes its own cell.
Partition layerwise_partition(const Layout& layout);

// Throws std::invalid_argument unless cells exactly tile the layout's blocks.
void validate_partition(const Partition& partition, const Layout& layout);

// Partition resolved against a concrete layout: contiguous value segments per
// cell, for restricted dots/norms without copying.
class PartitionIndex {
public:
    PartitionIndex(const Partition& partition, LayoutPtr layout);

    const LayoutPtr& layout() const { return layout_; }
    std::size_t cell_count() const { return cells_.size(); }
    const std::string& cell_name(std::size_t cell) const { return cells_[cell].name; }
    // (offset, length) pairs, ascending offset
    const std::vector<std::pair<std::size_t, std::size_t>>& segments(std::size_t cell) const {
        return cells_[cell].segments;
    }

    double cell_dot(std::size_t cell, const ParamVector& a, const ParamVector& b) const;
    double cell_sq_norm(std::size_t cell, const ParamVector& a) const;

private:
    struct CellIndex {
        std::string name;
        std::vector<std::pair<std::size_t, std::size_t>> segments;
    };
    LayoutPtr layout_;
    std::vector<CellIndex> cells_;
};

}  // namespace fedsim
