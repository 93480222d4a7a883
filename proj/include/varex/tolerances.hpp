#pragma once

// Numerical tolerances used across the library.  Structural checks
// (orthonormality, idempotence, symmetry, mass conservation) are held to a
// tighter bar than quantities that go through longer floating-point chains.
namespace varex {

inline constexpr double kStructuralTol = 1e-10;  // type invariants
inline constexpr double kDerivedTol = 1e-9;      // algebraic identities
inline constexpr double kAccumTol = 1e-12;       // summation determinism bar

}  // namespace varex
