"""Compressible Neo-Hookean material, plane strain, total Lagrangian.

Cauchy stress sigma = mu/J (b - I) + lam/J ln(J) I with b = F F^T, reduced
to the in-plane 2x2 block (out-of-plane stretch is one). The element
routine returns internal forces and the consistent stiffness for a
NURBS-mapped bulk element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EYE2 = np.eye(2)


class ElementInversion(RuntimeError):
    """det F dropped to zero or below somewhere in the bulk."""


@dataclass(frozen=True)
class NeoHookean:
    E: float
    nu: float

    @property
    def mu(self) -> float:
        return 0.5 * self.E / (1.0 + self.nu)

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    def strain_energy(self, F: np.ndarray) -> float:
        J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
        if J <= 0.0:
            raise ElementInversion(f"det F = {J:.3e}")
        I1 = F[0, 0] ** 2 + F[0, 1] ** 2 + F[1, 0] ** 2 + F[1, 1] ** 2
        lnJ = np.log(J)
        return 0.5 * self.mu * (I1 - 2.0 - 2.0 * lnJ) + 0.5 * self.lam * lnJ ** 2

    def first_pk(self, F: np.ndarray) -> np.ndarray:
        J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
        if J <= 0.0:
            raise ElementInversion(f"det F = {J:.3e}")
        FiT = np.array([[F[1, 1], -F[1, 0]], [-F[0, 1], F[0, 0]]]) / J
        return self.mu * F + (self.lam * np.log(J) - self.mu) * FiT

    def stress_and_modulus(self, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cauchy stress (2x2) and the deformation-gradient tangent dP/dF.

        The modulus A[i,J,k,L] linearizes the first Piola-Kirchhoff stress;
        it is what the bulk stiffness integrates.
        """
        J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
        if J <= 0.0:
            raise ElementInversion(f"det F = {J:.3e}")
        lnJ = np.log(J)
        mu, lam = self.mu, self.lam
        FiT = np.array([[F[1, 1], -F[1, 0]], [-F[0, 1], F[0, 0]]]) / J
        b = F @ F.T
        sigma = (mu / J) * (b - EYE2) + (lam / J) * lnJ * EYE2
        A = np.zeros((2, 2, 2, 2))
        coef = mu - lam * lnJ
        for i in range(2):
            for Jj in range(2):
                for k in range(2):
                    for L in range(2):
                        A[i, Jj, k, L] = (
                            coef * FiT[i, L] * FiT[k, Jj]
                            + lam * FiT[i, Jj] * FiT[k, L]
                        )
                A[i, Jj, i, Jj] += mu
        return sigma, A

    def out_of_plane_stress(self, F: np.ndarray) -> float:
        """sigma_zz of the plane-strain state (the mu term vanishes there)."""
        J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
        if J <= 0.0:
            raise ElementInversion(f"det F = {J:.3e}")
        return self.lam * np.log(J) / J


def bulk_element(material: NeoHookean, qp_dNdX: list[np.ndarray],
                 qp_wdet: np.ndarray, x_e: np.ndarray,
                 want_tangent: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Internal force and stiffness of one bulk element.

    qp_dNdX[q] holds the reference-gradient rows (n, 2) of the element basis
    at quadrature point q, qp_wdet the quadrature weight times the reference
    Jacobian determinant, x_e the current control point positions (n, 2).
    Returns (f (n,2), K (2n,2n)) with dof order (node0_x, node0_y, node1_x...).
    """
    n = x_e.shape[0]
    f = np.zeros((n, 2))
    K = np.zeros((2 * n, 2 * n)) if want_tangent else None
    for dNdX, wdet in zip(qp_dNdX, qp_wdet):
        F = x_e.T @ dNdX  # (2,2): F_iJ = sum_A x_A_i dN_A/dX_J
        if want_tangent:
            _, A = material.stress_and_modulus(F)
            P = material.first_pk(F)
        else:
            P = material.first_pk(F)
        f += wdet * dNdX @ P.T
        if want_tangent:
            # K[A i, B k] = w (dN_A/dX_J) A[i,J,k,L] (dN_B/dX_L)
            G = np.einsum("aJ,iJkL,bL->aibk", dNdX, A, dNdX) * wdet
            K += G.reshape(2 * n, 2 * n)
    return f, K


def element_cauchy(material: NeoHookean, qp_dNdX: list[np.ndarray],
                   x_e: np.ndarray) -> list[np.ndarray]:
    """Cauchy stress at every bulk quadrature point of one element."""
    out = []
    for dNdX in qp_dNdX:
        F = x_e.T @ dNdX
        sigma, _ = material.stress_and_modulus(F)
        out.append(sigma)
    return out
