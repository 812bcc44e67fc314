// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rpcc {

/// Dense N-order real tensor. Elements are stored in a flat array with the
/// mode-1 index varying fastest (column-major), matching the reshape
/// semantics used throughout the blockwise machinery below.
class DenseTensor {
public:
    DenseTensor() = default;

    explicit DenseTensor(std::vector<std::size_t> dims, double fill = 0.0)
        : dims_(std::move(dims)), data_(checked_size(dims_), fill) {}

    DenseTensor(std::vector<std::size_t> dims, std::vector<double> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (data_.size() != checked_size(dims_)) {
            throw std::invalid_argument(
                "DenseTensor: data length does not match product of dims");
        }
    }

    std::size_t order() const { return dims_.size(); }
    std::size_t dim(std::size_t n) const { return dims_[n]; }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t linear) { return data_[linear]; }
    double operator[](std::size_t linear) const { return data_[linear]; }

    /// Linear offset of a (0-based) multi-index, mode-1 fastest.
    std::size_t linear_index(std::span<const std::size_t> idx) const {
        std::size_t lin = 0;
        std::size_t stride = 1;
        for (std::size_t n = 0; n < dims_.size(); ++n) {
            if (idx[n] >= dims_[n]) {
                throw std::out_of_range("DenseTensor: index out of range");
            }
            lin += idx[n] * stride;
            stride *= dims_[n];
        }
        return lin;
    }

    double& at(std::span<const std::size_t> idx) { return data_[linear_index(idx)]; }
    double at(std::span<const std::size_t> idx) const { return data_[linear_index(idx)]; }

    double& at(std::initializer_list<std::size_t> idx) {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }
    double at(std::initializer_list<std::size_t> idx) const {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& dims) {
        if (dims.empty()) {
            throw std::invalid_argument("DenseTensor: order must be at least 1");
        }
        std::size_t total = 1;
        for (std::size_t d : dims) {
            if (d == 0) throw std::invalid_argument("DenseTensor: dims must be positive");
            total *= d;
        }
        return total;
    }

    std::vector<std::size_t> dims_;
    std::vector<double> data_;
};

inline double frobenius_norm(const DenseTensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
    return std::sqrt(s);
}

/// Per-mode block geometry: mode n splits into blockCounts[n] blocks of
/// blockDims[n] elements, so blockDims[n] * blockCounts[n] must equal the
/// paired tensor dimension.
struct BlockLayout {
    std::vector<std::size_t> block_dims;    // J_n
    std::vector<std::size_t> block_counts;  // K_n

    static BlockLayout create(const std::vector<std::size_t>& dims,
                              std::vector<std::size_t> block_dims) {
        if (block_dims.size() != dims.size()) {
            throw std::invalid_argument("BlockLayout: block_dims order mismatch");
        }
        BlockLayout layout;
        layout.block_dims = std::move(block_dims);
        layout.block_counts.resize(dims.size());
        for (std::size_t n = 0; n < dims.size(); ++n) {
            std::size_t j = layout.block_dims[n];
            if (j == 0 || dims[n] % j != 0) {
                throw std::invalid_argument(
                    "BlockLayout: block dim " + std::to_string(j) +
                    " does not divide tensor dim " + std::to_string(dims[n]) +
                    " in mode " + std::to_string(n + 1));
            }
            layout.block_counts[n] = dims[n] / j;
        }
        return layout;
    }

    std::size_t order() const { return block_dims.size(); }

    /// J: elements per block.
    std::size_t block_size() const {
        return std::accumulate(block_dims.begin(), block_dims.end(),
                               std::size_t{1}, std::multiplies<>());
    }

    /// K: total number of blocks.
    std::size_t block_count() const {
        return std::accumulate(block_counts.begin(), block_counts.end(),
                               std::size_t{1}, std::multiplies<>());
    }

    std::vector<std::size_t> dims() const {
        std::vector<std::size_t> d(order());
        for (std::size_t n = 0; n < order(); ++n) d[n] = block_dims[n] * block_counts[n];
        return d;
    }

    bool compatible_with(const DenseTensor& t) const {
        if (t.order() != order()) return false;
        for (std::size_t n = 0; n < order(); ++n) {
            if (block_dims[n] * block_counts[n] != t.dim(n)) return false;
        }
        return true;
    }

    void require_compatible(const DenseTensor& t) const {
        if (!compatible_with(t)) {
            throw std::invalid_argument("BlockLayout: incompatible with tensor dims");
        }
    }
};

/// A set of (0-based) block indices in [0, K).
class BlockSupport {
public:
    BlockSupport() = default;

    explicit BlockSupport(std::vector<std::size_t> members) : members_(std::move(members)) {
        std::sort(members_.begin(), members_.end());
        members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
    }

    static BlockSupport full(std::size_t block_count) {
        std::vector<std::size_t> m(block_count);
        std::iota(m.begin(), m.end(), std::size_t{0});
        return BlockSupport(std::move(m));
    }

    bool contains(std::size_t k) const {
        return std::binary_search(members_.begin(), members_.end(), k);
    }

    std::size_t size() const { return members_.size(); }
    bool empty() const { return members_.empty(); }
    const std::vector<std::size_t>& members() const { return members_; }

    BlockSupport complement(std::size_t block_count) const {
        require_within(block_count);
        std::vector<std::size_t> out;
        out.reserve(block_count - members_.size());
        for (std::size_t k = 0; k < block_count; ++k) {
            if (!contains(k)) out.push_back(k);
        }
        return BlockSupport(std::move(out));
    }

    void require_within(std::size_t block_count) const {
        if (!members_.empty() && members_.back() >= block_count) {
            throw std::out_of_range("BlockSupport: block index " +
                                    std::to_string(members_.back()) +
                                    " out of range (K = " + std::to_string(block_count) + ")");
        }
    }

    bool operator==(const BlockSupport& other) const = default;

private:
    std::vector<std::size_t> members_;  // sorted, unique
};

/// CP factor matrices, one per mode, all sharing the column count R.
struct CpFactors {
    std::vector<Eigen::MatrixXd> factors;

    std::size_t order() const { return factors.size(); }

    std::size_t rank() const {
        if (factors.empty()) return 0;
        const auto r = factors.front().cols();
        for (const auto& f : factors) {
            if (f.cols() != r) {
                throw std::invalid_argument("CpFactors: rank mismatch across factors");
            }
        }
        return static_cast<std::size_t>(r);
    }
};

/// Block index (0-based) of an element multi-index: mode-n block coordinate
/// is idx[n] / J_n, and coordinates combine with mode 1 fastest.
inline std::size_t block_of(std::span<const std::size_t> idx, const BlockLayout& layout) {
    if (idx.size() != layout.order()) {
        throw std::invalid_argument("block_of: index order mismatch");
    }
    std::size_t k = 0;
    std::size_t stride = 1;
    for (std::size_t n = 0; n < layout.order(); ++n) {
        if (idx[n] >= layout.block_dims[n] * layout.block_counts[n]) {
            throw std::out_of_range("block_of: element index out of range");
        }
        k += (idx[n] / layout.block_dims[n]) * stride;
        stride *= layout.block_counts[n];
    }
    return k;
}

inline std::size_t block_of(std::initializer_list<std::size_t> idx, const BlockLayout& layout) {
    return block_of(std::span<const std::size_t>(idx.begin(), idx.size()), layout);
}

/// Visits the elements of block k in unfolded-column order: within the block
/// the mode-1 offset varies fastest. f receives the linear element offset and
/// the full multi-index.
template <typename F>
void for_each_block_element(const BlockLayout& layout, std::size_t k, F&& f) {
    const std::size_t n_modes = layout.order();
    if (k >= layout.block_count()) {
        throw std::out_of_range("block element enumeration: block index out of range");
    }

    // Decompose k into per-mode block coordinates (mode 1 fastest).
    std::vector<std::size_t> base(n_modes);   // first element of the block, per mode
    std::vector<std::size_t> stride(n_modes); // linear stride per mode
    {
        std::size_t rem = k;
        std::size_t s = 1;
        for (std::size_t n = 0; n < n_modes; ++n) {
            base[n] = (rem % layout.block_counts[n]) * layout.block_dims[n];
            rem /= layout.block_counts[n];
            stride[n] = s;
            s *= layout.block_dims[n] * layout.block_counts[n];
        }
    }

    std::vector<std::size_t> off(n_modes, 0);  // within-block offsets
    std::vector<std::size_t> idx(n_modes);
    for (;;) {
        std::size_t lin = 0;
        for (std::size_t n = 0; n < n_modes; ++n) {
            idx[n] = base[n] + off[n];
            lin += idx[n] * stride[n];
        }
        f(lin, std::span<const std::size_t>(idx));

        std::size_t n = 0;
        while (n < n_modes && ++off[n] == layout.block_dims[n]) {
            off[n] = 0;
            ++n;
        }
        if (n == n_modes) break;
    }
}

/// Linear element offsets of block k, in unfolded-column order.
inline std::vector<std::size_t> block_element_indices(const BlockLayout& layout, std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(layout.block_size());
    for_each_block_element(layout, k,
                           [&](std::size_t lin, std::span<const std::size_t>) { out.push_back(lin); });
    return out;
}

/// Block index of every element, by linear element offset.
inline std::vector<std::uint32_t> element_block_map(const BlockLayout& layout) {
    const auto dims = layout.dims();
    std::size_t total = 1;
    for (std::size_t d : dims) total *= d;
    std::vector<std::uint32_t> map(total);
    std::vector<std::size_t> idx(dims.size(), 0);
    for (std::size_t lin = 0; lin < total; ++lin) {
        std::size_t k = 0;
        std::size_t stride = 1;
        for (std::size_t n = 0; n < dims.size(); ++n) {
            k += (idx[n] / layout.block_dims[n]) * stride;
            stride *= layout.block_counts[n];
        }
        map[lin] = static_cast<std::uint32_t>(k);
        std::size_t n = 0;
        while (n < dims.size() && ++idx[n] == dims[n]) {
            idx[n] = 0;
            ++n;
        }
    }
    return map;
}

/// B-unfolding: column k is the vectorization of block k, mode-1 offset
/// fastest within the block, blocks enumerated with the mode-1 block
/// coordinate fastest.
inline Eigen::MatrixXd b_unfold(const DenseTensor& t, const BlockLayout& layout) {
    layout.require_compatible(t);
    const std::size_t j_total = layout.block_size();
    const std::size_t k_total = layout.block_count();
    Eigen::MatrixXd out(j_total, k_total);
    for (std::size_t k = 0; k < k_total; ++k) {
        std::size_t j = 0;
        for_each_block_element(layout, k, [&](std::size_t lin, std::span<const std::size_t>) {
            out(static_cast<Eigen::Index>(j++), static_cast<Eigen::Index>(k)) = t[lin];
        });
    }
    return out;
}

/// Inverse of b_unfold; b_fold(b_unfold(X), layout) == X exactly.
inline DenseTensor b_fold(const Eigen::MatrixXd& unfolded, const BlockLayout& layout) {
    if (static_cast<std::size_t>(unfolded.rows()) != layout.block_size() ||
        static_cast<std::size_t>(unfolded.cols()) != layout.block_count()) {
        throw std::invalid_argument("b_fold: matrix shape does not match layout");
    }
    DenseTensor t(layout.dims());
    for (std::size_t k = 0; k < layout.block_count(); ++k) {
        std::size_t j = 0;
        for_each_block_element(layout, k, [&](std::size_t lin, std::span<const std::size_t>) {
            t[lin] = unfolded(static_cast<Eigen::Index>(j++), static_cast<Eigen::Index>(k));
        });
    }
    return t;
}

/// Blockwise projector: copies the blocks in the support, zeroes the rest.
inline DenseTensor block_project(const DenseTensor& t, const BlockLayout& layout,
                                 const BlockSupport& support) {
    layout.require_compatible(t);
    support.require_within(layout.block_count());
    DenseTensor out(t.dims());
    for (std::size_t k : support.members()) {
        for_each_block_element(layout, k, [&](std::size_t lin, std::span<const std::size_t>) {
            out[lin] = t[lin];
        });
    }
    return out;
}

/// Composes CP factors into the dense tensor with elements
/// sum_r prod_n factors[n](i_n, r).
inline DenseTensor cp_compose(const CpFactors& cp) {
    if (cp.factors.empty()) {
        throw std::invalid_argument("cp_compose: no factors");
    }
    const std::size_t rank = cp.rank();  // throws on mismatch
    const std::size_t n_modes = cp.order();
    std::vector<std::size_t> dims(n_modes);
    for (std::size_t n = 0; n < n_modes; ++n) {
        dims[n] = static_cast<std::size_t>(cp.factors[n].rows());
    }
    DenseTensor out(dims);
    if (rank == 0) return out;

    std::vector<std::size_t> idx(n_modes, 0);
    Eigen::VectorXd prod(static_cast<Eigen::Index>(rank));
    for (std::size_t lin = 0; lin < out.size(); ++lin) {
        prod.setOnes();
        for (std::size_t n = 0; n < n_modes; ++n) {
            prod.array() *= cp.factors[n].row(static_cast<Eigen::Index>(idx[n])).array().transpose();
        }
        out[lin] = prod.sum();
        std::size_t n = 0;
        while (n < n_modes && ++idx[n] == dims[n]) {
            idx[n] = 0;
            ++n;
        }
    }
    return out;
}

/// Elementwise product across a nonempty list of same-shape matrices.
inline Eigen::MatrixXd generalized_hadamard(std::span<const Eigen::MatrixXd> mats) {
    if (mats.empty()) {
        throw std::invalid_argument("generalized_hadamard: empty list");
    }
    Eigen::MatrixXd out = mats.front();
    for (std::size_t i = 1; i < mats.size(); ++i) {
        if (mats[i].rows() != out.rows() || mats[i].cols() != out.cols()) {
            throw std::invalid_argument("generalized_hadamard: shape mismatch");
        }
        out.array() *= mats[i].array();
    }
    return out;
}

/// Sum of the entries of the generalized Hadamard product.
inline double generalized_inner(std::span<const Eigen::MatrixXd> mats) {
    return generalized_hadamard(mats).sum();
}

/// Matricized-tensor times Khatri-Rao product: row i of the result is
/// sum over elements e with e(mode)=i of t[e] * hadamard_{n != mode} mats[n].row(e(n)).
/// The workhorse behind both the least-squares factor fit and the posterior
/// mean updates.
inline Eigen::MatrixXd mttkrp(const DenseTensor& t, std::span<const Eigen::MatrixXd> mats,
                              std::size_t mode) {
    const std::size_t n_modes = t.order();
    if (mats.size() != n_modes || mode >= n_modes) {
        throw std::invalid_argument("mttkrp: bad mode or factor count");
    }
    const Eigen::Index rank = mats.front().cols();
    for (std::size_t n = 0; n < n_modes; ++n) {
        if (mats[n].cols() != rank ||
            static_cast<std::size_t>(mats[n].rows()) != t.dim(n)) {
            throw std::invalid_argument("mttkrp: factor shape mismatch");
        }
    }

    // Transposed copies make the per-row products contiguous.
    std::vector<Eigen::MatrixXd> tm(n_modes);
    for (std::size_t n = 0; n < n_modes; ++n) tm[n] = mats[n].transpose();

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.dim(mode)), rank);
    Eigen::VectorXd outer(rank);   // product over modes >= 1, excluding `mode`
    Eigen::VectorXd row(rank);

    std::vector<std::size_t> idx(n_modes, 0);
    bool outer_stale = true;
    for (std::size_t lin = 0; lin < t.size(); ++lin) {
        if (outer_stale) {
            outer.setOnes();
            for (std::size_t n = 1; n < n_modes; ++n) {
                if (n == mode) continue;
                outer.array() *= tm[n].col(static_cast<Eigen::Index>(idx[n])).array();
            }
            outer_stale = false;
        }
        const double v = t[lin];
        if (v != 0.0) {
            if (mode == 0) {
                out.row(static_cast<Eigen::Index>(idx[0])) += v * outer.transpose();
            } else {
                row.array() = outer.array() * tm[0].col(static_cast<Eigen::Index>(idx[0])).array();
                out.row(static_cast<Eigen::Index>(idx[mode])) += v * row.transpose();
            }
        }
        std::size_t n = 0;
        while (n < n_modes && ++idx[n] == t.dim(n)) {
            idx[n] = 0;
            ++n;
        }
        if (n >= 1) outer_stale = true;  // an index above mode 0 changed
    }
    return out;
}

}  // namespace rpcc
