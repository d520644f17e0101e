#pragma once

// Tone grids, mix-index addressing and the time<->frequency conversions used
// by the harmonic-balance residual.  Phasor convention: peak amplitude,
// e^{+j w t} time dependence, dc stored once as a purely real bin.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twpa/constants.hpp"
#include "twpa/errors.hpp"

namespace twpa {

using cplx = std::complex<double>;

/// Integer pair labelling the intermodulation product n*f_signal + m*f_pump.
/// Single-fundamental (pump-only) grids use n == 0.
struct MixIndex {
    int n = 0;  ///< signal order
    int m = 0;  ///< pump order

    friend bool operator==(const MixIndex&, const MixIndex&) = default;
};

enum class Truncation { box, diamond };

/// Truncated set of intermodulation frequencies with a deterministic ordering
/// (ascending frequency, dc first) and precomputed sampling/projection
/// operators for the time<->frequency round trip.
class ToneGrid {
public:
    struct Bin {
        MixIndex idx;
        double freq = 0.0;  ///< Hz, non-negative
    };

    /// Builds the grid.  `fundamentals` holds 1 entry (pump-only) or 2
    /// entries (signal, pump); `max_orders` gives the per-fundamental order.
    /// Throws CollisionError when two distinct mix products coincide within
    /// `collision_tol` Hz.
    ToneGrid(std::vector<double> fundamentals, std::vector<int> max_orders,
             Truncation trunc = Truncation::box, double collision_tol = 1e3,
             int oversampling = 4)
        : fundamentals_(std::move(fundamentals)),
          max_orders_(std::move(max_orders)),
          trunc_(trunc),
          collision_tol_(collision_tol),
          oversampling_(oversampling) {
        validate_inputs();
        enumerate_bins();
        build_transforms();
    }

    const std::vector<double>& fundamentals() const { return fundamentals_; }
    const std::vector<int>& max_orders() const { return max_orders_; }
    Truncation truncation() const { return trunc_; }
    int oversampling() const { return oversampling_; }
    bool two_tone() const { return fundamentals_.size() == 2; }

    /// Number of grid frequencies including dc.
    int size() const { return static_cast<int>(bins_.size()); }
    const std::vector<Bin>& bins() const { return bins_; }
    double freq(int i) const { return bins_[static_cast<size_t>(i)].freq; }
    const MixIndex& index(int i) const { return bins_[static_cast<size_t>(i)].idx; }

    /// Bin position of a mix index (canonical or negated), or -1.
    int find(MixIndex mi) const {
        for (int i = 0; i < size(); ++i) {
            if (bins_[static_cast<size_t>(i)].idx == mi) return i;
            if (bins_[static_cast<size_t>(i)].idx == MixIndex{-mi.n, -mi.m}) return i;
        }
        return -1;
    }

    /// Bin holding the frequency closest to `f` within the collision
    /// tolerance, or -1.
    int find_freq(double f) const {
        for (int i = 0; i < size(); ++i)
            if (std::abs(bins_[static_cast<size_t>(i)].freq - f) <= collision_tol_) return i;
        return -1;
    }

    double max_freq() const { return bins_.back().freq; }

    /// Length of the real-valued phasor vector: 1 (dc) + 2 per ac bin.
    int rvec_size() const { return 2 * size() - 1; }

    /// Samples along the (first, second) sampling axis; s2() == 1 for a
    /// single fundamental.
    int s1() const { return s1_; }
    int s2() const { return s2_; }
    int sample_count() const { return s1_ * s2_; }

    /// Sample operator: rvec -> time samples on the torus lattice.
    const Eigen::MatrixXd& eval_matrix() const { return eval_; }
    /// Projection operator: time samples -> rvec (exact inverse of eval on
    /// band-limited data).
    const Eigen::MatrixXd& proj_matrix() const { return proj_; }

    // rvec layout helpers. rvec = [V_dc, Re V_1, Im V_1, Re V_2, Im V_2, ...]
    static int re_pos(int bin) { return bin == 0 ? 0 : 2 * bin - 1; }
    static int im_pos(int bin) { return 2 * bin; }  // valid for bin >= 1

    static Eigen::VectorXd to_rvec(const std::vector<cplx>& phasors) {
        const int nb = static_cast<int>(phasors.size());
        Eigen::VectorXd v(2 * nb - 1);
        v[0] = phasors[0].real();
        for (int b = 1; b < nb; ++b) {
            v[re_pos(b)] = phasors[static_cast<size_t>(b)].real();
            v[im_pos(b)] = phasors[static_cast<size_t>(b)].imag();
        }
        return v;
    }

    static std::vector<cplx> from_rvec(const Eigen::VectorXd& v) {
        const int nb = static_cast<int>((v.size() + 1) / 2);
        std::vector<cplx> out(static_cast<size_t>(nb));
        out[0] = cplx(v[0], 0.0);
        for (int b = 1; b < nb; ++b)
            out[static_cast<size_t>(b)] = cplx(v[re_pos(b)], v[im_pos(b)]);
        return out;
    }

private:
    void validate_inputs() {
        const auto nf = fundamentals_.size();
        if (nf < 1 || nf > 2)
            throw ConfigError("ToneGrid: need 1 or 2 fundamentals, got " + std::to_string(nf));
        if (max_orders_.size() != nf)
            throw ConfigError("ToneGrid: max_orders size must match fundamentals");
        for (double f : fundamentals_)
            if (!(f > 0.0)) throw ConfigError("ToneGrid: fundamentals must be > 0");
        for (int k : max_orders_)
            if (k < 1) throw ConfigError("ToneGrid: max_orders must be >= 1");
        if (oversampling_ < 1) throw ConfigError("ToneGrid: oversampling must be >= 1");
    }

    // Signal order / pump order limits. With one fundamental it is the pump.
    int kn() const { return two_tone() ? max_orders_[0] : 0; }
    int km() const { return two_tone() ? max_orders_[1] : max_orders_[0]; }
    double fs() const { return two_tone() ? fundamentals_[0] : 0.0; }
    double fp() const { return two_tone() ? fundamentals_[1] : fundamentals_[0]; }

    bool inside(int n, int m) const {
        if (std::abs(n) > kn() || std::abs(m) > km()) return false;
        if (trunc_ == Truncation::diamond)
            return std::abs(n) + std::abs(m) <= std::max(kn(), km());
        return true;
    }

    void enumerate_bins() {
        std::vector<Bin> cand;
        for (int n = -kn(); n <= kn(); ++n) {
            for (int m = -km(); m <= km(); ++m) {
                if (!inside(n, m)) continue;
                double f = n * fs() + m * fp();
                MixIndex mi{n, m};
                if (f < 0.0) {
                    f = -f;
                    mi = {-n, -m};
                }
                // keep the lexicographically-canonical representative of
                // (mi, -mi) at f ~ 0 handled below
                cand.push_back({mi, f});
            }
        }
        std::sort(cand.begin(), cand.end(), [](const Bin& a, const Bin& b) {
            if (a.freq != b.freq) return a.freq < b.freq;
            if (a.idx.m != b.idx.m) return a.idx.m < b.idx.m;
            return a.idx.n < b.idx.n;
        });
        bins_.clear();
        for (const Bin& b : cand) {
            if (!bins_.empty()) {
                const Bin& prev = bins_.back();
                if (b.freq - prev.freq <= collision_tol_) {
                    if (b.idx == prev.idx || (b.idx.n == -prev.idx.n && b.idx.m == -prev.idx.m))
                        continue;  // same product (or its conjugate image at dc)
                    throw CollisionError(
                        "mix products {" + std::to_string(prev.idx.n) + "," +
                        std::to_string(prev.idx.m) + "} and {" + std::to_string(b.idx.n) + "," +
                        std::to_string(b.idx.m) + "} collide near " + std::to_string(b.freq) +
                        " Hz; offset the pump");
                }
            }
            bins_.push_back(b);
        }
        if (bins_.empty() || bins_.front().freq > collision_tol_)
            bins_.insert(bins_.begin(), Bin{{0, 0}, 0.0});
        bins_.front().freq = 0.0;  // dc always index 0
    }

    void build_transforms() {
        s1_ = two_tone() ? oversampling_ * (2 * kn() + 1) : 1;
        s2_ = oversampling_ * (2 * km() + 1);
        const int S = s1_ * s2_;
        const int nv = rvec_size();
        eval_.resize(S, nv);
        proj_.resize(nv, S);
        for (int j = 0; j < s1_; ++j) {
            for (int l = 0; l < s2_; ++l) {
                const int row = j * s2_ + l;
                const double tha = kTwoPi * j / s1_;
                const double thb = kTwoPi * l / s2_;
                eval_(row, 0) = 1.0;
                proj_(0, row) = 1.0 / S;
                for (int b = 1; b < size(); ++b) {
                    const MixIndex& mi = bins_[static_cast<size_t>(b)].idx;
                    // single-tone grids sample along axis 2 only
                    const double th = two_tone() ? mi.n * tha + mi.m * thb : mi.m * thb;
                    const double c = std::cos(th), s = std::sin(th);
                    eval_(row, re_pos(b)) = c;
                    eval_(row, im_pos(b)) = -s;
                    proj_(re_pos(b), row) = 2.0 * c / S;
                    proj_(im_pos(b), row) = -2.0 * s / S;
                }
            }
        }
    }

    std::vector<double> fundamentals_;
    std::vector<int> max_orders_;
    Truncation trunc_;
    double collision_tol_;
    int oversampling_;
    std::vector<Bin> bins_;
    int s1_ = 1, s2_ = 1;
    Eigen::MatrixXd eval_, proj_;
};

using ToneGridPtr = std::shared_ptr<const ToneGrid>;

inline ToneGridPtr build_tone_grid(std::vector<double> fundamentals, std::vector<int> max_orders,
                                   Truncation trunc = Truncation::box,
                                   double collision_tol = 1e3, int oversampling = 4) {
    return std::make_shared<const ToneGrid>(std::move(fundamentals), std::move(max_orders), trunc,
                                            collision_tol, oversampling);
}

/// Complex phasor vector over a ToneGrid for one node or branch quantity.
struct Spectrum {
    ToneGridPtr grid;
    std::vector<cplx> phasors;  ///< one per grid bin; dc bin purely real

    Spectrum() = default;
    explicit Spectrum(ToneGridPtr g) : grid(std::move(g)) {
        phasors.assign(static_cast<size_t>(grid->size()), cplx(0.0, 0.0));
    }

    cplx& operator[](int i) { return phasors[static_cast<size_t>(i)]; }
    const cplx& operator[](int i) const { return phasors[static_cast<size_t>(i)]; }

    void check() const {
        if (static_cast<int>(phasors.size()) != grid->size())
            throw Error("Spectrum: length does not match grid");
        if (phasors[0].imag() != 0.0) throw Error("Spectrum: dc bin must be real");
    }
};

/// Real sampled waveform on the grid's torus lattice (s2 fastest).  For a
/// single fundamental this is one period sampled uniformly.
struct Waveform {
    ToneGridPtr grid;
    Eigen::VectorXd samples;
};

/// Evaluates the spectrum on a single-tone period with `samples_per_period`
/// points. Throws AliasError below the Nyquist bound of the highest bin.
inline std::vector<double> spectrum_to_waveform(const Spectrum& s, int samples_per_period) {
    s.check();
    const ToneGrid& g = *s.grid;
    if (g.two_tone())
        throw Error("spectrum_to_waveform(samples_per_period) is single-tone only");
    const int kmax = g.max_orders()[0];
    if (samples_per_period < 2 * kmax + 1)
        throw AliasError("samples_per_period " + std::to_string(samples_per_period) +
                         " violates the Nyquist bound for harmonic " + std::to_string(kmax));
    std::vector<double> w(static_cast<size_t>(samples_per_period));
    for (int j = 0; j < samples_per_period; ++j) {
        const double th = kTwoPi * j / samples_per_period;
        double v = s[0].real();
        for (int b = 1; b < g.size(); ++b)
            v += (s[b] * std::exp(cplx(0.0, g.index(b).m * th))).real();
        w[static_cast<size_t>(j)] = v;
    }
    return w;
}

/// Evaluates the spectrum on the grid's own sampling lattice.
inline Waveform spectrum_to_waveform(const Spectrum& s) {
    s.check();
    return {s.grid, s.grid->eval_matrix() * ToneGrid::to_rvec(s.phasors)};
}

/// Projects a waveform sampled on one single-tone period back onto the grid.
inline Spectrum waveform_to_spectrum(const std::vector<double>& w, const ToneGridPtr& grid) {
    const ToneGrid& g = *grid;
    if (g.two_tone()) throw Error("1-d waveform_to_spectrum is single-tone only");
    const int S = static_cast<int>(w.size());
    const int kmax = g.max_orders()[0];
    if (S < 2 * kmax + 1) throw AliasError("too few samples for harmonic " + std::to_string(kmax));
    Spectrum s(grid);
    for (int b = 0; b < g.size(); ++b) {
        cplx acc(0.0, 0.0);
        for (int j = 0; j < S; ++j)
            acc += w[static_cast<size_t>(j)] * std::exp(cplx(0.0, -g.index(b).m * kTwoPi * j / S));
        acc *= (b == 0 ? 1.0 : 2.0) / static_cast<double>(S);
        s[b] = b == 0 ? cplx(acc.real(), 0.0) : acc;
    }
    return s;
}

/// Projects a lattice waveform back onto its grid (exact inverse of the
/// lattice spectrum_to_waveform for band-limited content).
inline Spectrum waveform_to_spectrum(const Waveform& w) {
    const ToneGrid& g = *w.grid;
    if (w.samples.size() != g.sample_count()) throw Error("waveform length mismatch");
    Spectrum s(w.grid);
    Eigen::VectorXd rv = g.proj_matrix() * w.samples;
    s.phasors = ToneGrid::from_rvec(rv);
    return s;
}

/// Mean-square value implied by the phasors (Parseval).
inline double spectrum_mean_square(const Spectrum& s) {
    double acc = s[0].real() * s[0].real();
    for (int b = 1; b < s.grid->size(); ++b) acc += 0.5 * std::norm(s[b]);
    return acc;
}

}  // namespace twpa
