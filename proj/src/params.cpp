#include "fedsim/params.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace fedsim {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

}  // namespace

Layout::Layout(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
    std::size_t expected_offset = 0;
    std::set<std::string> names;
    for (const Block& b : blocks_) {
        if (b.offset != expected_offset)
            throw std::invalid_argument("layout blocks must tile contiguously: " + b.name);
        if (b.length != shape_product(b.shape))
            throw std::invalid_argument("block length does not match shape: " + b.name);
        if (!names.insert(b.name).second)
            throw std::invalid_argument("duplicate block name: " + b.name);
        expected_offset += b.length;
    }
    total_ = expected_offset;
}

const Block& Layout::block(std::string_view name) const {
    return blocks_[index_of(name)];
}

std::size_t Layout::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        if (blocks_[i].name == name) return i;
    throw std::invalid_argument("no such block: " + std::string(name));
}

LayoutBuilder& LayoutBuilder::add(std::string name, std::vector<std::size_t> shape) {
    Block b;
    b.name = std::move(name);
    b.offset = offset_;
    b.length = shape_product(shape);
    b.shape = std::move(shape);
    offset_ += b.length;
    blocks_.push_back(std::move(b));
    return *this;
}

LayoutPtr LayoutBuilder::build() {
    return std::make_shared<const Layout>(std::move(blocks_));
}

std::span<double> ParamVector::block(std::string_view name) {
    const Block& b = layout_->block(name);
    return {values_.data() + b.offset, b.length};
}

std::span<const double> ParamVector::block(std::string_view name) const {
    const Block& b = layout_->block(name);
    return {values_.data() + b.offset, b.length};
}

std::span<double> ParamVector::block_at(std::size_t index) {
    const Block& b = layout_->blocks()[index];
    return {values_.data() + b.offset, b.length};
}

std::span<const double> ParamVector::block_at(std::size_t index) const {
    const Block& b = layout_->blocks()[index];
    return {values_.data() + b.offset, b.length};
}

bool ParamVector::congruent_with(const ParamVector& other) const {
    if (layout_ == other.layout_) return true;
    if (!layout_ || !other.layout_) return false;
    return *layout_ == *other.layout_;
}

void require_congruent(const ParamVector& a, const ParamVector& b) {
    if (!a.congruent_with(b)) throw CongruenceError("incongruent ParamVectors");
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
    ParamVector out = a;
    add_in_place(out, b);
    return out;
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
    ParamVector out = a;
    sub_in_place(out, b);
    return out;
}

ParamVector scale(const ParamVector& a, double c) {
    ParamVector out = a;
    scale_in_place(out, c);
    return out;
}

ParamVector hadamard(const ParamVector& a, const ParamVector& b) {
    require_congruent(a, b);
    ParamVector out = a;
    double* o = out.data();
    const double* q = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] *= q[i];
    return out;
}

double dot(const ParamVector& a, const ParamVector& b) {
    require_congruent(a, b);
    const double* p = a.data();
    const double* q = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += p[i] * q[i];
    return acc;
}

double sq_l2_norm(const ParamVector& a) {
    const double* p = a.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += p[i] * p[i];
    return acc;
}

void add_in_place(ParamVector& a, const ParamVector& b) {
    require_congruent(a, b);
    double* p = a.data();
    const double* q = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) p[i] += q[i];
}

void sub_in_place(ParamVector& a, const ParamVector& b) {
    require_congruent(a, b);
    double* p = a.data();
    const double* q = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) p[i] -= q[i];
}

void scale_in_place(ParamVector& a, double c) {
    double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) p[i] *= c;
}

void axpy_in_place(ParamVector& a, double c, const ParamVector& b) {
    require_congruent(a, b);
    double* p = a.data();
    const double* q = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) p[i] += c * q[i];
}

Partition layerwise_partition(const Layout& layout) {
    Partition p;
    p.cells.reserve(layout.block_count());
    for (const Block& b : layout.blocks()) p.cells.push_back({b.name, {b.name}});
    return p;
}

void validate_partition(const Partition& partition, const Layout& layout) {
    std::set<std::string> seen;
    for (const Partition::Cell& cell : partition.cells) {
        for (const std::string& name : cell.blocks) {
            layout.index_of(name);  // existence
            if (!seen.insert(name).second)
                throw std::invalid_argument("partition cells overlap on block: " + name);
        }
    }
    if (seen.size() != layout.block_count())
        throw std::invalid_argument("partition does not cover all blocks");
}

PartitionIndex::PartitionIndex(const Partition& partition, LayoutPtr layout)
    : layout_(std::move(layout)) {
    validate_partition(partition, *layout_);
    cells_.reserve(partition.cells.size());
    for (const Partition::Cell& cell : partition.cells) {
        CellIndex ci;
        ci.name = cell.name;
        for (const std::string& name : cell.blocks) {
            const Block& b = layout_->block(name);
            ci.segments.emplace_back(b.offset, b.length);
        }
        std::sort(ci.segments.begin(), ci.segments.end());
        cells_.push_back(std::move(ci));
    }
}

double PartitionIndex::cell_dot(std::size_t cell, const ParamVector& a, const ParamVector& b) const {
    require_congruent(a, b);
    const double* p = a.data();
    const double* q = b.data();
    double acc = 0.0;
    for (const auto& [off, len] : cells_[cell].segments)
        for (std::size_t i = off; i < off + len; ++i) acc += p[i] * q[i];
    return acc;
}

double PartitionIndex::cell_sq_norm(std::size_t cell, const ParamVector& a) const {
    const double* p = a.data();
    double acc = 0.0;
    for (const auto& [off, len] : cells_[cell].segments)
        for (std::size_t i = off; i < off + len; ++i) acc += p[i] * p[i];
    return acc;
}

}  // namespace fedsim
