#pragma once

// Multi-positive supervised contrastive loss over sampled voxel embeddings.
//
// For entries i with unit embeddings z_i and labels k_i:
//   l_i = -(1/|P_i|) sum_{p in P_i} log( exp(z_i.z_p / tau) / sum_{q != i} exp(z_i.z_q / tau) )
// with P_i = {p != i : k_p = k_i}. Anchors with empty P_i contribute 0 and
// are counted as skipped. The reported loss is the plain sum of l_i.
//
// Gradient: with A_iq = softmax_i(q) - [q in P_i]/|P_i| (zero row for
// skipped anchors), dL/dZ = (A + A^T) Z / tau.

#include <cstdint>
#include <string>
#include <vector>

#include "voxsynth/grid.hpp"
#include "voxsynth/rng.hpp"

namespace voxsynth {

// Where a batch entry came from. view is 1 or 2.
struct SampledIndex {
    int view = 1;
    std::int64_t voxel = 0;
    std::uint16_t label = 0;
    bool operator==(const SampledIndex &) const = default;
};

template <class Real>
struct IndexBatch {
    std::int64_t dim = 0;             // C_Z
    double tau = 0.33;
    std::vector<std::int64_t> labels;  // one per entry
    std::vector<Real> embeddings;      // entries x dim, row-major
    std::vector<SampledIndex> origin;  // optional; empty or one per entry

    std::int64_t size() const noexcept { return static_cast<std::int64_t>(labels.size()); }
    Real *row(std::int64_t i) { return embeddings.data() + i * dim; }
    const Real *row(std::int64_t i) const { return embeddings.data() + i * dim; }
    // Throws on shape mismatch, non-finite values, dim < 1 or tau <= 0.
    void validate() const;
};

template <class Real>
struct LossReport {
    double loss = 0.0;
    std::vector<double> per_anchor;
    std::vector<Real> grad;  // entries x dim
    std::int64_t skipped_anchors = 0;
    bool grad_wrt_input = false;
};

struct LossOptions {
    // Normalise inside the kernel. When false, embeddings must already be
    // unit norm within 1e-6.
    bool normalize = true;
    // Reject non-unit embeddings when normalize is false. Finite-difference
    // probes step off the sphere and turn this off.
    bool require_unit_norm = true;
    // Chain the gradient through the normalisation: g_x = (g - (g.z) z) / |x|.
    bool grad_wrt_input = false;
    int workers = 1;
};

// Throws ErrorCode::invalid_argument on a zero embedding.
template <class Real>
IndexBatch<Real> l2_normalize(const IndexBatch<Real> &batch);

template <class Real>
LossReport<Real> supcon_loss(const IndexBatch<Real> &batch, const LossOptions &opts = {});

struct GradCheckOptions {
    double epsilon = 1e-6;
    // Number of coordinates to probe; 0 probes all of them. The subset is
    // drawn from `seed` without replacement.
    std::int64_t max_coordinates = 0;
    std::uint64_t seed = 0;
    LossOptions loss;
};

struct GradCheckReport {
    double max_relative_error = 0.0;  // max|a - n| / max(|a|_inf, |n|_inf)
    double max_abs_error = 0.0;
    std::int64_t coordinates = 0;
};

// Central differences of the loss against the analytic gradient. When the
// gradient is taken w.r.t. the normalised embeddings, the probes perturb the
// normalised batch and evaluate without renormalising.
GradCheckReport supcon_grad_check(const IndexBatch<double> &batch, const GradCheckOptions &opts = {});

// Uniform sample without replacement of `count` indices from the pooled set
// of both views (view 1 voxels, then view 2 voxels), sorted by (view, voxel).
std::vector<SampledIndex> sample_indices(const LabelVolume &labels1, const LabelVolume &labels2, std::int64_t count,
                                         RngStream &rng, bool exclude_background);

// Output voxel (i,j,k) takes the label at (f i, f j, f k).
LabelVolume downsample_labels(const LabelVolume &labels, int factor);

struct ScaleLevel {
    std::string layer;
    int factor = 1;
    std::int64_t samples = 512;
};

// Decoder layers 7, 9, 12, 15, 18 and 23 of the reference UNet.
std::vector<ScaleLevel> default_scale_spec();

struct MultiscaleReport {
    double total = 0.0;
    std::vector<ScaleLevel> levels;
    std::vector<LossReport<double>> per_scale;
    std::vector<std::vector<SampledIndex>> samples;
};

struct MultiscaleOptions {
    bool exclude_background = false;
    LossOptions loss;
};

// features[s] holds the (view 1, view 2) feature volumes of level s. Level s
// samples from the stream (layer tag, 0), so levels with the same tag draw
// the same indices.
MultiscaleReport multiscale_loss(const std::vector<std::pair<FeatureVolume, FeatureVolume>> &features,
                                 const LabelVolume &labels, const std::vector<ScaleLevel> &spec, double tau,
                                 const RngStream &rng, const MultiscaleOptions &opts = {});

// Gathers the embeddings of sampled indices into a batch.
IndexBatch<double> gather_batch(const std::vector<SampledIndex> &samples, const FeatureVolume &view1,
                                const FeatureVolume &view2, double tau);

}  // namespace voxsynth
