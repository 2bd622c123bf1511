#include "voxsynth/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "voxsynth/parallel.hpp"

namespace voxsynth {

template <class Real>
void IndexBatch<Real>::validate() const {
    if (dim < 1) fail(ErrorCode::invalid_argument, "embedding dimension must be >= 1");
    if (!(tau > 0.0) || !std::isfinite(tau)) fail(ErrorCode::invalid_argument, "tau must be positive");
    if (embeddings.size() != labels.size() * static_cast<std::size_t>(dim)) {
        fail(ErrorCode::dimension_mismatch, "embeddings do not match entries x dim");
    }
    if (!origin.empty() && origin.size() != labels.size()) {
        fail(ErrorCode::dimension_mismatch, "origin list does not match the entry count");
    }
    for (Real v : embeddings) {
        if (!std::isfinite(static_cast<double>(v))) fail(ErrorCode::invalid_argument, "non-finite embedding value");
    }
}

template <class Real>
IndexBatch<Real> l2_normalize(const IndexBatch<Real> &batch) {
    batch.validate();
    IndexBatch<Real> out = batch;
    for (std::int64_t i = 0; i < out.size(); ++i) {
        Real *z = out.row(i);
        Real ss = 0;
        for (std::int64_t c = 0; c < out.dim; ++c) ss += z[c] * z[c];
        if (!(ss > 0)) fail(ErrorCode::invalid_argument, "zero embedding at entry " + std::to_string(i));
        const Real n = std::sqrt(ss);
        for (std::int64_t c = 0; c < out.dim; ++c) z[c] /= n;
    }
    return out;
}

template <class Real>
LossReport<Real> supcon_loss(const IndexBatch<Real> &input, const LossOptions &opts) {
    input.validate();
    const std::int64_t n = input.size();
    if (n < 2) fail(ErrorCode::invalid_argument, "contrastive loss needs at least 2 entries");
    const std::int64_t dim = input.dim;

    IndexBatch<Real> normed;
    const IndexBatch<Real> *batch = &input;
    if (opts.normalize) {
        normed = l2_normalize(input);
        batch = &normed;
    } else if (opts.require_unit_norm) {
        for (std::int64_t i = 0; i < n; ++i) {
            Real ss = 0;
            for (std::int64_t c = 0; c < dim; ++c) ss += input.row(i)[c] * input.row(i)[c];
            if (std::abs(std::sqrt(static_cast<double>(ss)) - 1.0) > 1e-6) {
                fail(ErrorCode::precondition, "embedding " + std::to_string(i) + " is not unit norm");
            }
        }
    }
    const Real inv_tau = static_cast<Real>(1.0 / input.tau);

    // coeff[i][q] = A_iq; one row per anchor, written by that anchor only.
    std::vector<Real> coeff(static_cast<std::size_t>(n * n), Real(0));
    std::vector<double> per_anchor(static_cast<std::size_t>(n), 0.0);
    std::vector<char> skipped(static_cast<std::size_t>(n), 0);

    parallel_for(n, opts.workers, [&](std::int64_t i) {
        const Real *zi = batch->row(i);
        Real *a = coeff.data() + i * n;
        std::int64_t positives = 0;
        for (std::int64_t q = 0; q < n; ++q) {
            if (q != i && input.labels[q] == input.labels[i]) ++positives;
        }
        if (positives == 0) {
            skipped[i] = 1;
            return;
        }
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::int64_t q = 0; q < n; ++q) {
            if (q == i) continue;
            const Real *zq = batch->row(q);
            Real s = 0;
            for (std::int64_t c = 0; c < dim; ++c) s += zi[c] * zq[c];
            a[q] = s * inv_tau;
            mx = std::max(mx, a[q]);
        }
        Real sum = 0, pos_sum = 0;
        for (std::int64_t q = 0; q < n; ++q) {
            if (q == i) continue;
            if (input.labels[q] == input.labels[i]) pos_sum += a[q];
            a[q] = std::exp(a[q] - mx);
            sum += a[q];
        }
        const Real lse = mx + std::log(sum);
        const Real inv_p = Real(1) / static_cast<Real>(positives);
        per_anchor[i] = static_cast<double>(lse - pos_sum * inv_p);
        for (std::int64_t q = 0; q < n; ++q) {
            if (q == i) continue;
            a[q] = a[q] / sum - (input.labels[q] == input.labels[i] ? inv_p : Real(0));
        }
    });

    LossReport<Real> rep;
    rep.per_anchor = per_anchor;
    rep.skipped_anchors = std::count(skipped.begin(), skipped.end(), 1);
    if (rep.skipped_anchors == n) fail(ErrorCode::precondition, "all anchors skipped: no label has two entries");
    for (double l : per_anchor) rep.loss += l;

    rep.grad.assign(input.embeddings.size(), Real(0));
    parallel_for(n, opts.workers, [&](std::int64_t j) {
        Real *g = rep.grad.data() + j * dim;
        for (std::int64_t q = 0; q < n; ++q) {
            const Real w = (coeff[j * n + q] + coeff[q * n + j]) * inv_tau;
            if (w == Real(0)) continue;
            const Real *zq = batch->row(q);
            for (std::int64_t c = 0; c < dim; ++c) g[c] += w * zq[c];
        }
        if (opts.grad_wrt_input && opts.normalize) {
            const Real *x = input.row(j);
            const Real *z = batch->row(j);
            Real norm = 0, gz = 0;
            for (std::int64_t c = 0; c < dim; ++c) {
                norm += x[c] * x[c];
                gz += g[c] * z[c];
            }
            norm = std::sqrt(norm);
            for (std::int64_t c = 0; c < dim; ++c) g[c] = (g[c] - gz * z[c]) / norm;
        }
    });
    rep.grad_wrt_input = opts.grad_wrt_input && opts.normalize;
    return rep;
}

template struct IndexBatch<float>;
template struct IndexBatch<double>;
template IndexBatch<float> l2_normalize(const IndexBatch<float> &);
template IndexBatch<double> l2_normalize(const IndexBatch<double> &);
template LossReport<float> supcon_loss(const IndexBatch<float> &, const LossOptions &);
template LossReport<double> supcon_loss(const IndexBatch<double> &, const LossOptions &);

namespace {

// Loss of a batch in which only one row differs from a cached base. Moving one
// coordinate changes row i of Z, hence one row and one column of the
// similarity matrix, so a probe costs O(n dim) instead of O(n^2 dim).
class RowProbe {
  public:
    RowProbe(const IndexBatch<double> &z) : z_(z), n_(z.size()), inv_tau_(1.0 / z.tau) {
        sim_.assign(static_cast<std::size_t>(n_ * n_), 0.0);
        shift_.assign(static_cast<std::size_t>(n_), 0.0);
        denom_.assign(static_cast<std::size_t>(n_), 0.0);
        pos_.assign(static_cast<std::size_t>(n_), 0.0);
        npos_.assign(static_cast<std::size_t>(n_), 0);
        for (std::int64_t a = 0; a < n_; ++a) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t q = 0; q < n_; ++q) {
                if (q == a) continue;
                sim_[a * n_ + q] = dot(z_.row(a), z_.row(q)) * inv_tau_;
                mx = std::max(mx, sim_[a * n_ + q]);
                if (z_.labels[q] == z_.labels[a]) {
                    pos_[a] += sim_[a * n_ + q];
                    ++npos_[a];
                }
            }
            shift_[a] = mx;
            for (std::int64_t q = 0; q < n_; ++q) {
                if (q != a) denom_[a] += std::exp(sim_[a * n_ + q] - mx);
            }
        }
    }

    // Loss with row i replaced by `zi`.
    double loss(std::int64_t i, const double *zi) const {
        std::vector<double> s(static_cast<std::size_t>(n_), 0.0);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t q = 0; q < n_; ++q) {
            if (q == i) continue;
            s[q] = dot(zi, z_.row(q)) * inv_tau_;
            mx = std::max(mx, s[q]);
        }
        double total = 0.0;
        for (std::int64_t a = 0; a < n_; ++a) {
            if (npos_[a] == 0) continue;
            if (a == i) {
                double sum = 0.0, pos = 0.0;
                for (std::int64_t q = 0; q < n_; ++q) {
                    if (q == i) continue;
                    sum += std::exp(s[q] - mx);
                    if (z_.labels[q] == z_.labels[i]) pos += s[q];
                }
                total += mx + std::log(sum) - pos / static_cast<double>(npos_[a]);
                continue;
            }
            const double old_s = sim_[a * n_ + i];
            const double denom = denom_[a] - std::exp(old_s - shift_[a]) + std::exp(s[a] - shift_[a]);
            double pos = pos_[a];
            if (z_.labels[a] == z_.labels[i]) pos += s[a] - old_s;
            total += shift_[a] + std::log(denom) - pos / static_cast<double>(npos_[a]);
        }
        return total;
    }

  private:
    double dot(const double *x, const double *y) const {
        double acc = 0.0;
        for (std::int64_t c = 0; c < z_.dim; ++c) acc += x[c] * y[c];
        return acc;
    }

    const IndexBatch<double> &z_;
    std::int64_t n_;
    double inv_tau_;
    std::vector<double> sim_, shift_, denom_, pos_;
    std::vector<std::int64_t> npos_;
};

}  // namespace

GradCheckReport supcon_grad_check(const IndexBatch<double> &batch, const GradCheckOptions &opts) {
    if (!(opts.epsilon > 0.0)) fail(ErrorCode::invalid_argument, "epsilon must be positive");
    LossOptions lo = opts.loss;
    lo.workers = std::max(1, lo.workers);
    // Without chaining, the function being differentiated is the loss of
    // the already-normalised embeddings.
    IndexBatch<double> base = lo.grad_wrt_input ? batch : l2_normalize(batch);
    if (!lo.grad_wrt_input) lo.normalize = false;
    const auto analytic = supcon_loss(base, lo);

    const std::int64_t total = static_cast<std::int64_t>(base.embeddings.size());
    std::vector<std::int64_t> coords;
    if (opts.max_coordinates <= 0 || opts.max_coordinates >= total) {
        coords.resize(static_cast<std::size_t>(total));
        std::iota(coords.begin(), coords.end(), std::int64_t{0});
    } else {
        RngStream rng(opts.seed);
        std::unordered_set<std::int64_t> chosen;
        for (std::int64_t j = total - opts.max_coordinates; j < total; ++j) {
            const auto t = rng.uniform_int(0, j);
            if (!chosen.insert(t).second) chosen.insert(j);
        }
        coords.assign(chosen.begin(), chosen.end());
        std::sort(coords.begin(), coords.end());
    }

    // The probed function renormalises only when the gradient is chained
    // through the normalisation.
    const bool renormalize = lo.normalize;
    const IndexBatch<double> z = renormalize ? l2_normalize(base) : base;
    const RowProbe probe(z);
    const std::int64_t dim = base.dim;
    std::vector<double> numeric(coords.size());
    parallel_for(static_cast<std::int64_t>(coords.size()), lo.workers, [&](std::int64_t t) {
        const auto c = coords[t];
        const std::int64_t i = c / dim;
        std::vector<double> row(base.row(i), base.row(i) + dim);
        auto eval = [&](double x) {
            row[c % dim] = x;
            std::vector<double> zi = row;
            if (renormalize) {
                double ss = 0.0;
                for (double v : zi) ss += v * v;
                const double norm = std::sqrt(ss);
                for (double &v : zi) v /= norm;
            }
            return probe.loss(i, zi.data());
        };
        const double x0 = base.embeddings[c];
        const double up = eval(x0 + opts.epsilon);
        const double down = eval(x0 - opts.epsilon);
        numeric[t] = (up - down) / (2.0 * opts.epsilon);
    });

    GradCheckReport rep;
    rep.coordinates = static_cast<std::int64_t>(coords.size());
    double amax = 0.0, nmax = 0.0;
    for (std::size_t t = 0; t < coords.size(); ++t) {
        const double a = analytic.grad[coords[t]];
        amax = std::max(amax, std::abs(a));
        nmax = std::max(nmax, std::abs(numeric[t]));
        rep.max_abs_error = std::max(rep.max_abs_error, std::abs(a - numeric[t]));
    }
    const double scale = std::max(amax, nmax);
    rep.max_relative_error = scale > 0.0 ? rep.max_abs_error / scale : 0.0;
    return rep;
}

std::vector<SampledIndex> sample_indices(const LabelVolume &labels1, const LabelVolume &labels2, std::int64_t count,
                                         RngStream &rng, bool exclude_background) {
    require_same_lattice(labels1.meta, labels2.meta, "sample_indices");
    if (count < 2) fail(ErrorCode::invalid_argument, "sample count must be >= 2");
    const std::int64_t nvox = labels1.size();
    const LabelVolume *views[2] = {&labels1, &labels2};

    // Pool ids: view 1 voxels are [0, nvox), view 2 voxels [nvox, 2 nvox).
    std::vector<std::int64_t> pool;
    std::int64_t pool_size = 2 * nvox;
    if (exclude_background) {
        for (int v = 0; v < 2; ++v)
            for (std::int64_t x = 0; x < nvox; ++x) {
                if (views[v]->values[x] != 0) pool.push_back(v * nvox + x);
            }
        pool_size = static_cast<std::int64_t>(pool.size());
    }
    if (count > pool_size) {
        fail(ErrorCode::invalid_argument, "sample count " + std::to_string(count) + " exceeds the " +
                                              std::to_string(pool_size) + " available voxels");
    }

    // Floyd's algorithm: exactly `count` draws, uniform over subsets.
    std::unordered_set<std::int64_t> chosen;
    chosen.reserve(static_cast<std::size_t>(count) * 2);
    for (std::int64_t j = pool_size - count; j < pool_size; ++j) {
        const auto t = rng.uniform_int(0, j);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::vector<std::int64_t> ids(chosen.begin(), chosen.end());
    for (auto &id : ids) {
        if (exclude_background) id = pool[id];
    }
    std::sort(ids.begin(), ids.end());
    std::vector<SampledIndex> out;
    out.reserve(ids.size());
    for (auto id : ids) {
        const int v = id < nvox ? 0 : 1;
        const std::int64_t x = id - v * nvox;
        out.push_back({v + 1, x, views[v]->values[x]});
    }
    return out;
}

LabelVolume downsample_labels(const LabelVolume &labels, int factor) {
    if (factor < 1) fail(ErrorCode::invalid_argument, "downsample factor must be positive");
    const auto &d = labels.meta.dims;
    for (auto n : d) {
        if (n % factor != 0) {
            fail(ErrorCode::invalid_argument,
                 "factor " + std::to_string(factor) + " does not divide dimension " + std::to_string(n));
        }
    }
    GridMeta m = labels.meta;
    for (int a = 0; a < 3; ++a) {
        m.dims[a] = d[a] / factor;
        m.spacing[a] *= factor;
    }
    LabelVolume out(m);
    for (std::int64_t i = 0; i < m.dims[0]; ++i)
        for (std::int64_t j = 0; j < m.dims[1]; ++j)
            for (std::int64_t k = 0; k < m.dims[2]; ++k) out.at(i, j, k) = labels.at(factor * i, factor * j, factor * k);
    return out;
}

std::vector<ScaleLevel> default_scale_spec() {
    return {{"7", 8, 512}, {"9", 16, 512}, {"12", 8, 512}, {"15", 4, 512}, {"18", 2, 512}, {"23", 1, 512}};
}

IndexBatch<double> gather_batch(const std::vector<SampledIndex> &samples, const FeatureVolume &view1,
                                const FeatureVolume &view2, double tau) {
    if (view1.channels != view2.channels) fail(ErrorCode::dimension_mismatch, "views differ in channel count");
    require_same_lattice(view1.meta, view2.meta, "feature views");
    IndexBatch<double> b;
    b.dim = view1.channels;
    b.tau = tau;
    b.origin = samples;
    b.labels.reserve(samples.size());
    b.embeddings.reserve(samples.size() * static_cast<std::size_t>(b.dim));
    for (const auto &s : samples) {
        const auto &f = s.view == 1 ? view1 : view2;
        b.labels.push_back(s.label);
        for (float x : f.voxel(s.voxel)) b.embeddings.push_back(x);
    }
    return b;
}

MultiscaleReport multiscale_loss(const std::vector<std::pair<FeatureVolume, FeatureVolume>> &features,
                                 const LabelVolume &labels, const std::vector<ScaleLevel> &spec, double tau,
                                 const RngStream &rng, const MultiscaleOptions &opts) {
    if (features.size() != spec.size()) {
        fail(ErrorCode::dimension_mismatch, "one feature pair per scale level is required");
    }
    MultiscaleReport rep;
    rep.levels = spec;
    for (std::size_t s = 0; s < spec.size(); ++s) {
        const auto &lvl = spec[s];
        const auto lab = downsample_labels(labels, lvl.factor);
        for (const auto *f : {&features[s].first, &features[s].second}) {
            if (f->meta.dims != lab.meta.dims) {
                fail(ErrorCode::dimension_mismatch, "features of layer " + lvl.layer + " do not match labels / " +
                                                        std::to_string(lvl.factor));
            }
        }
        auto srng = rng.derive(lvl.layer, 0);
        auto idx = sample_indices(lab, lab, lvl.samples, srng, opts.exclude_background);
        const auto batch = gather_batch(idx, features[s].first, features[s].second, tau);
        rep.per_scale.push_back(supcon_loss(batch, opts.loss));
        rep.total += rep.per_scale.back().loss;
        rep.samples.push_back(std::move(idx));
    }
    return rep;
}

}  // namespace voxsynth
