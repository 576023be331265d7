#pragma once

// Measurement loss Φ = Σ_k φ_k for a multiple-shooting grid. φ_k is the mean
// squared error of the states saved along interval k against the samples it
// owns (its start sample included, its end sample excluded except on the
// last interval), averaged over owned samples and state components.

#include "msnode/shooting.hpp"

namespace msnode {

class ShootingLoss {
 public:
  // `measurements` holds one row per grid time.
  ShootingLoss(const ShootingGrid& grid, RowMatrix measurements);

  const RowMatrix& measurements() const { return y_; }

  // φ_k from a single-interval integration.
  double phi(const Dynamics& f, const ShootingVariables& vars, Index k) const;
  // Σ_k φ_k from one batched primal pass.
  double total(const Dynamics& f, const ShootingVariables& vars) const;
  double total(const Linearization& lin) const;

  struct Gradients {
    double phi = 0.0;
    Vec lx;  // Φ_x + G_xᵀ λ, m·n
    Vec lp;  // Φ_p + G_pᵀ λ
  };
  // Gradients of the Lagrangian Φ + λᵀG from one reverse sweep per batch on
  // the recorded tapes. An empty λ is treated as zero, giving Φ_x and Φ_p.
  Gradients lagrangian_grads(const Linearization& lin) const;

 private:
  // Weight on the squared error of sample j (0..gaps) of interval k.
  double weight(Index k, Index j, Index gaps) const;
  Matrix targets(const ShootingGrid::Batch& b, Index j) const;

  const ShootingGrid* grid_;
  RowMatrix y_;
};

}  // namespace msnode
