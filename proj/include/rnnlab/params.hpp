#pragma once

// Parameter arrays of a single-hidden-layer RNN and the piano-roll batch type.

#include "rnnlab/core.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

namespace rnnlab {

/// Hidden-layer nonlinearity. `tanh` is the model; the others exist for the
/// single-unit demonstration (sigmoid) and closed-form Jacobian tests (identity).
enum class HiddenActivation { tanh, sigmoid, identity };

/// The five learnable arrays. Shared layout for parameters and gradients.
struct ParamArrays {
    Matrix w_ih; ///< hidden x input
    Matrix w_hh; ///< hidden x hidden
    Matrix w_ho; ///< output x hidden
    Vector b_h;  ///< hidden
    Vector b_o;  ///< output

    int hidden() const { return static_cast<int>(w_hh.rows()); }
    int inputs() const { return static_cast<int>(w_ih.cols()); }
    int outputs() const { return static_cast<int>(w_ho.rows()); }

    Eigen::Index size() const { return w_ih.size() + w_hh.size() + w_ho.size() + b_h.size() + b_o.size(); }

    bool shapes_consistent() const
    {
        return w_hh.rows() == w_hh.cols() && w_ih.rows() == w_hh.rows() && w_ho.cols() == w_hh.rows() &&
               b_h.size() == w_hh.rows() && b_o.size() == w_ho.rows();
    }

    bool same_shape(const ParamArrays& other) const
    {
        return w_ih.rows() == other.w_ih.rows() && w_ih.cols() == other.w_ih.cols() &&
               w_hh.rows() == other.w_hh.rows() && w_ho.rows() == other.w_ho.rows() &&
               w_ho.cols() == other.w_ho.cols() && b_h.size() == other.b_h.size() &&
               b_o.size() == other.b_o.size();
    }

    bool all_finite() const
    {
        return w_ih.allFinite() && w_hh.allFinite() && w_ho.allFinite() && b_h.allFinite() && b_o.allFinite();
    }

    /// Concatenation in the order w_ih, w_hh, w_ho, b_h, b_o (column-major within each).
    Vector flatten() const
    {
        Vector flat(size());
        Eigen::Index offset = 0;
        auto put = [&](const auto& m) {
            flat.segment(offset, m.size()) = m.reshaped();
            offset += m.size();
        };
        put(w_ih);
        put(w_hh);
        put(w_ho);
        put(b_h);
        put(b_o);
        return flat;
    }

    void assign_flat(const Vector& flat)
    {
        require(flat.size() == size(), "flat parameter vector has wrong length");
        Eigen::Index offset = 0;
        auto take = [&](auto& m) {
            m.reshaped() = flat.segment(offset, m.size());
            offset += m.size();
        };
        take(w_ih);
        take(w_hh);
        take(w_ho);
        take(b_h);
        take(b_o);
    }

    void set_zero()
    {
        w_ih.setZero();
        w_hh.setZero();
        w_ho.setZero();
        b_h.setZero();
        b_o.setZero();
    }

    bool operator==(const ParamArrays& other) const
    {
        return same_shape(other) && w_ih == other.w_ih && w_hh == other.w_hh && w_ho == other.w_ho &&
               b_h == other.b_h && b_o == other.b_o;
    }

protected:
    static ParamArrays zero_arrays(int hidden, int inputs, int outputs)
    {
        return ParamArrays{Matrix::Zero(hidden, inputs), Matrix::Zero(hidden, hidden),
                           Matrix::Zero(outputs, hidden), Vector::Zero(hidden), Vector::Zero(outputs)};
    }
};

struct RnnParams : ParamArrays {
    HiddenActivation activation = HiddenActivation::tanh;

    static RnnParams zeros(int hidden, int inputs = kNotes, int outputs = kNotes)
    {
        require(hidden >= 1 && inputs >= 1 && outputs >= 1, "RnnParams sizes must be positive");
        RnnParams p;
        static_cast<ParamArrays&>(p) = zero_arrays(hidden, inputs, outputs);
        return p;
    }

    void validate() const
    {
        require(shapes_consistent(), "RnnParams shapes are inconsistent");
        require(all_finite(), "RnnParams contain non-finite entries");
    }
};

/// d(loss)/d(params); mirrors RnnParams.
struct Gradients : ParamArrays {
    static Gradients zeros_like(const ParamArrays& p)
    {
        Gradients g;
        static_cast<ParamArrays&>(g) = zero_arrays(p.hidden(), p.inputs(), p.outputs());
        return g;
    }

    Gradients& operator+=(const ParamArrays& other)
    {
        w_ih += other.w_ih;
        w_hh += other.w_hh;
        w_ho += other.w_ho;
        b_h += other.b_h;
        b_o += other.b_o;
        return *this;
    }

    Gradients& operator*=(double s)
    {
        w_ih *= s;
        w_hh *= s;
        w_ho *= s;
        b_h *= s;
        b_o *= s;
        return *this;
    }
};

/// A set of binary piano-roll sequences. Each sequence is stored as a
/// [notes x T] matrix whose column t is the frame at step t.
struct SequenceBatch {
    std::vector<Matrix> frames;
    std::vector<int> pad_prefix; ///< leading all-zero frames added by chunking

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
    int length(std::size_t k) const { return static_cast<int>(frames[k].cols()); }

    int max_length() const
    {
        int t = 0;
        for (const auto& f : frames) t = std::max(t, static_cast<int>(f.cols()));
        return t;
    }

    std::vector<int> lengths() const
    {
        std::vector<int> out;
        out.reserve(frames.size());
        for (const auto& f : frames) out.push_back(static_cast<int>(f.cols()));
        return out;
    }

    void push_back(Matrix sequence, int pad = 0)
    {
        frames.push_back(std::move(sequence));
        pad_prefix.push_back(pad);
    }

    SequenceBatch subset(const std::vector<std::size_t>& indices) const
    {
        SequenceBatch out;
        out.frames.reserve(indices.size());
        out.pad_prefix.reserve(indices.size());
        for (auto i : indices) out.push_back(frames.at(i), pad_prefix.at(i));
        return out;
    }

    /// Throws DataError for non-binary entries or a non-zero padded prefix,
    /// ContractError when `notes` rows are expected and not present.
    void validate(int notes = kNotes) const
    {
        require(pad_prefix.size() == frames.size(), "SequenceBatch pad_prefix size mismatch");
        for (std::size_t k = 0; k < frames.size(); ++k) {
            const Matrix& f = frames[k];
            require(f.rows() == notes, "SequenceBatch frame dimension mismatch");
            if (((f.array() != 0.0) && (f.array() != 1.0)).any())
                throw DataError("sequence " + std::to_string(k) + " has non-binary frame entries");
            const int pad = pad_prefix[k];
            require(pad >= 0 && pad <= f.cols(), "SequenceBatch pad_prefix exceeds sequence length");
            if (pad > 0 && (f.leftCols(pad).array() != 0.0).any())
                throw DataError("sequence " + std::to_string(k) + " has active notes inside its padding");
        }
    }
};

} // namespace rnnlab
