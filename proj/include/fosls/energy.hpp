#pragma once

#include <vector>

#include "fosls/twophase.hpp"

namespace fosls {

struct EnergyRecord {
  double t = 0.0;
  double E = 0.0;     // kinetic + mixing energy
  double D = 0.0;     // viscous + interfacial dissipation
  double dEdt = 0.0;  // discrete rate (filled by energy_rate)
  double mismatch = 0.0;  // dEdt + D
};

// Ginzburg-Landau density: |grad phi|^2 / 2 + (phi^2-1)^2 / (4 eps^2).
double mixing_energy_density(double phi, double gx, double gy, double eps);

// Integral of |u|^2 / 2 + lambda * W(phi), with grad(phi) taken from B.
double total_energy(const State& s, const Params& p);

// Integral of mu |grad u|^2 + lambda gamma (div B - phi(phi^2-1)/eps^2)^2,
// with grad(u) taken from V (V22 = -V11).
double dissipation(const State& s, const Params& p);

// Fill dEdt and mismatch using the integrator's own difference weights:
// first-order at record 1, second-order from record 2 on (first-order
// everywhere for the first-order scheme). Record 0 keeps dEdt = 0.
void energy_rate(std::vector<EnergyRecord>& series, double dt, TimeScheme scheme);

struct EnergyLawReport {
  double max_rel_mismatch = 0.0;   // |dEdt + D| / max(D) over records >= 2
  double mean_rel_mismatch = 0.0;
  double max_dissipation = 0.0;
  bool energy_nonincreasing = true;  // E monotone from record 2 on
};

EnergyLawReport energy_law_report(const std::vector<EnergyRecord>& series);

struct TopologyReport {
  int components = 0;      // connected components of the selected region
  double area = 0.0;       // centroid-sampled area of that region
  double perimeter = 0.0;  // marching-squares length of the zero level set
  double axis_extent = 0.0;  // extents of {phi > 0} centroids
  double diag_extent = 0.0;
  double axis_diag_ratio = 0.0;
};

// Leaf elements are labeled by the sign of phi at their centroid; components
// are counted on the edge-neighbor graph. By default the negative region is
// measured; positive_phase selects {phi > 0} instead.
TopologyReport interface_topology(const State& s, bool positive_phase = false);

}  // namespace fosls
