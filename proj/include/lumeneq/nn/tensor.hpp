// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <string>

#include "lumeneq/error.hpp"

namespace lumeneq::nn {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// A (batch, time, channels) activation stored time-major: row t*batch + b
/// holds the channel vector of sample b at step t. The (batch, channels) form
/// is the degenerate case time == 1.
template <typename Scalar>
struct Tensor {
    Mat<Scalar> data;
    Index batch = 0;
    Index time = 0;

    Tensor() = default;
    Tensor(Index batch_, Index time_, Index channels)
        : data(Mat<Scalar>::Zero(batch_ * time_, channels)), batch(batch_), time(time_) {}
    Tensor(Mat<Scalar> values, Index batch_, Index time_)
        : data(std::move(values)), batch(batch_), time(time_) {
        check();
    }

    [[nodiscard]] Index channels() const noexcept { return data.cols(); }

    /// All batch rows at one time step.
    [[nodiscard]] auto step(Index t) { return data.middleRows(t * batch, batch); }
    [[nodiscard]] auto step(Index t) const { return data.middleRows(t * batch, batch); }

    [[nodiscard]] Scalar& at(Index b, Index t, Index c) { return data(t * batch + b, c); }
    [[nodiscard]] Scalar at(Index b, Index t, Index c) const { return data(t * batch + b, c); }

    void check() const {
        if (batch < 0 || time < 0 || data.rows() != batch * time) {
            throw ShapeError("Tensor: rows " + std::to_string(data.rows()) +
                             " inconsistent with batch " + std::to_string(batch) + " x time " +
                             std::to_string(time));
        }
    }
};

}  // namespace lumeneq::nn
