//! Finite groups, character tables, group actions on grids and the
//! convolution/projection calculus built from characters.
//!
//! All integrals over a group are taken with respect to the normalized
//! counting measure, so `∫_G f(g) dg = (1/|G|) Σ_g f(g)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Imaginary parts below this are treated as zero when flagging real characters.
const REAL_CHARACTER_TOL: f64 = 1e-12;

/// A finite group given by its multiplication and inverse tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteGroup {
    order: usize,
    mul: Vec<usize>,
    inv: Vec<usize>,
    identity: usize,
}

impl FiniteGroup {
    /// Builds a group from raw tables and checks the group axioms.
    ///
    /// `mul` is row-major: `mul[g * order + h]` is the index of `gh`.
    pub fn from_tables(mul: Vec<usize>, inv: Vec<usize>, identity: usize) -> Result<Self> {
        let order = inv.len();
        if order == 0 {
            return Err(Error::InvalidArgument("group must have at least one element".into()));
        }
        if mul.len() != order * order {
            return Err(Error::DimensionMismatch {
                what: "multiplication table",
                expected: order * order,
                found: mul.len(),
            });
        }
        if identity >= order || mul.iter().chain(inv.iter()).any(|&x| x >= order) {
            return Err(Error::InvalidArgument("group table entry out of range".into()));
        }
        let group = Self {
            order,
            mul,
            inv,
            identity,
        };
        group.validate()?;
        Ok(group)
    }

    fn validate(&self) -> Result<()> {
        let n = self.order;
        for g in 0..n {
            let mut row_seen = vec![false; n];
            let mut col_seen = vec![false; n];
            for h in 0..n {
                row_seen[self.mul(g, h)] = true;
                col_seen[self.mul(h, g)] = true;
            }
            if row_seen.iter().chain(col_seen.iter()).any(|s| !s) {
                return Err(Error::InvalidArgument(format!(
                    "row or column {g} of the multiplication table is not a permutation"
                )));
            }
            if self.mul(self.identity, g) != g || self.mul(g, self.identity) != g {
                return Err(Error::InvalidArgument(format!("identity fails on element {g}")));
            }
            if self.mul(g, self.inv[g]) != self.identity || self.mul(self.inv[g], g) != self.identity
            {
                return Err(Error::InvalidArgument(format!("inverse table wrong at {g}")));
            }
        }
        for a in 0..n {
            for b in 0..n {
                let ab = self.mul(a, b);
                for c in 0..n {
                    if self.mul(ab, c) != self.mul(a, self.mul(b, c)) {
                        return Err(Error::InvalidArgument(format!(
                            "multiplication is not associative on ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The cyclic group ℤ/nℤ with `mul(i, j) = (i + j) mod n`.
    pub fn cyclic(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("cyclic group order must be positive".into()));
        }
        let mul = (0..n * n).map(|k| (k / n + k % n) % n).collect();
        let inv = (0..n).map(|i| (n - i) % n).collect();
        Ok(Self {
            order: n,
            mul,
            inv,
            identity: 0,
        })
    }

    pub fn trivial() -> Self {
        Self {
            order: 1,
            mul: vec![0],
            inv: vec![0],
            identity: 0,
        }
    }

    /// Componentwise product; element `(g1, g2)` has index `g1 * |G2| + g2`.
    pub fn direct_product(a: &Self, b: &Self) -> Self {
        let (na, nb) = (a.order, b.order);
        let order = na * nb;
        let mut mul = vec![0; order * order];
        for g in 0..order {
            for h in 0..order {
                let (g1, g2) = (g / nb, g % nb);
                let (h1, h2) = (h / nb, h % nb);
                mul[g * order + h] = a.mul(g1, h1) * nb + b.mul(g2, h2);
            }
        }
        let inv = (0..order)
            .map(|g| a.inv(g / nb) * nb + b.inv(g % nb))
            .collect();
        Self {
            order,
            mul,
            inv,
            identity: a.identity * nb + b.identity,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn mul(&self, g: usize, h: usize) -> usize {
        self.mul[g * self.order + h]
    }

    #[inline]
    pub fn inv(&self, g: usize) -> usize {
        self.inv[g]
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn mul_table(&self) -> &[usize] {
        &self.mul
    }

    pub fn inv_table(&self) -> &[usize] {
        &self.inv
    }

    pub fn is_abelian(&self) -> bool {
        (0..self.order).all(|g| (0..self.order).all(|h| self.mul(g, h) == self.mul(h, g)))
    }
}

/// One irreducible character.
#[derive(Clone, Debug, PartialEq)]
pub struct Irrep {
    pub label: String,
    pub dim: usize,
    pub values: Vec<Complex64>,
    pub real_valued: bool,
}

impl Irrep {
    pub fn new(label: impl Into<String>, dim: usize, values: Vec<Complex64>) -> Self {
        let real_valued = values.iter().all(|v| v.im.abs() <= REAL_CHARACTER_TOL);
        let values = if real_valued {
            values.into_iter().map(|v| Complex64::new(v.re, 0.0)).collect()
        } else {
            values
        };
        Self {
            label: label.into(),
            dim,
            values,
            real_valued,
        }
    }

    #[inline]
    pub fn chi(&self, g: usize) -> Complex64 {
        self.values[g]
    }

    /// Real parts of the character; errors if the character is complex.
    pub fn real_values(&self) -> Result<Vec<f64>> {
        if !self.real_valued {
            return Err(Error::ComplexCharacter(self.label.clone()));
        }
        Ok(self.values.iter().map(|v| v.re).collect())
    }
}

/// Character table of a finite group: one entry per irreducible class.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacterTable {
    irreps: Vec<Irrep>,
}

impl CharacterTable {
    /// Validates a table against `group`; `tol` bounds every relation checked.
    pub fn new(group: &FiniteGroup, irreps: Vec<Irrep>, tol: f64) -> Result<Self> {
        let table = Self { irreps };
        table.validate(group, tol)?;
        Ok(table)
    }

    pub fn irreps(&self) -> &[Irrep] {
        &self.irreps
    }

    pub fn len(&self) -> usize {
        self.irreps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.irreps.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&Irrep> {
        self.irreps.iter().find(|i| i.label == label)
    }

    pub fn all_real(&self) -> bool {
        self.irreps.iter().all(|i| i.real_valued)
    }

    /// `⟨χ_π, χ_σ⟩_G = (1/|G|) Σ_g χ_π(g) conj(χ_σ(g))`.
    pub fn inner_product(a: &Irrep, b: &Irrep) -> Complex64 {
        let n = a.values.len() as f64;
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x * y.conj())
            .sum::<Complex64>()
            / n
    }

    /// Largest deviation of the Gram matrix of characters from the identity.
    pub fn orthogonality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (p, a) in self.irreps.iter().enumerate() {
            for (s, b) in self.irreps.iter().enumerate() {
                let target = if p == s { 1.0 } else { 0.0 };
                worst = worst.max((Self::inner_product(a, b) - target).norm());
            }
        }
        worst
    }

    pub fn validate(&self, group: &FiniteGroup, tol: f64) -> Result<()> {
        let n = group.order();
        if self.irreps.is_empty() {
            return Err(Error::TableInvalid("no irreducible characters".into()));
        }
        for irrep in &self.irreps {
            if irrep.values.len() != n {
                return Err(Error::TableInvalid(format!(
                    "character {} has {} values for a group of order {n}",
                    irrep.label,
                    irrep.values.len()
                )));
            }
            let at_e = irrep.chi(group.identity());
            if (at_e - Complex64::new(irrep.dim as f64, 0.0)).norm() > tol {
                return Err(Error::TableInvalid(format!(
                    "χ_{}(e) = {at_e} differs from the dimension {}",
                    irrep.label, irrep.dim
                )));
            }
            for x in 0..n {
                for g in 0..n {
                    let conj = group.mul(group.mul(group.inv(x), g), x);
                    if (irrep.chi(conj) - irrep.chi(g)).norm() > tol {
                        return Err(Error::TableInvalid(format!(
                            "χ_{} is not a class function: χ(x⁻¹gx) ≠ χ(g) for x={x}, g={g}",
                            irrep.label
                        )));
                    }
                }
            }
        }
        let dim_sq: usize = self.irreps.iter().map(|i| i.dim * i.dim).sum();
        if dim_sq != n {
            return Err(Error::TableInvalid(format!(
                "Σ d_π² = {dim_sq} differs from |G| = {n}"
            )));
        }
        let defect = self.orthogonality_defect();
        if defect > tol {
            return Err(Error::TableInvalid(format!(
                "⟨χ_π, χ_σ⟩_G = δ_πσ violated by {defect:e}"
            )));
        }
        Ok(())
    }
}

/// How to construct a character table.
#[derive(Clone, Debug)]
pub enum TableKind {
    /// Discrete Fourier characters of ℤ/nℤ.
    Cyclic(usize),
    /// Tensor products of the children's irreps (group must be their direct product).
    Product(Vec<CharacterTable>),
    /// Caller-supplied characters, validated.
    UserSupplied(Vec<Irrep>),
}

/// Character table for `group`, validated at tolerance `tol`.
pub fn character_table(group: &FiniteGroup, kind: TableKind, tol: f64) -> Result<CharacterTable> {
    let irreps = match kind {
        TableKind::Cyclic(n) => {
            if group.order() != n {
                return Err(Error::DimensionMismatch {
                    what: "cyclic group order",
                    expected: n,
                    found: group.order(),
                });
            }
            cyclic_irreps(n)
        }
        TableKind::Product(children) => {
            let mut iter = children.into_iter();
            let first = iter
                .next()
                .ok_or_else(|| Error::InvalidArgument("product needs at least one factor".into()))?;
            iter.fold(first.irreps, |acc, t| tensor_irreps(&acc, &t.irreps))
        }
        TableKind::UserSupplied(irreps) => irreps,
    };
    CharacterTable::new(group, irreps, tol)
}

fn cyclic_irreps(n: usize) -> Vec<Irrep> {
    (0..n)
        .map(|k| {
            let label = match (n, k) {
                (2, 0) => "pi_u".to_string(),
                (2, 1) => "pi_a".to_string(),
                _ => format!("chi{k}"),
            };
            let values = (0..n)
                .map(|j| {
                    // Reduce jk mod n first so the phase stays in [0, 2π).
                    let phase = 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                    if (2 * ((j * k) % n)) == n {
                        Complex64::new(-1.0, 0.0)
                    } else if (j * k) % n == 0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(phase.cos(), phase.sin())
                    }
                })
                .collect();
            Irrep::new(label, 1, values)
        })
        .collect()
}

fn tensor_irreps(a: &[Irrep], b: &[Irrep]) -> Vec<Irrep> {
    let nb = b.first().map_or(0, |i| i.values.len());
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            let values = (0..x.values.len() * nb)
                .map(|g| x.values[g / nb] * y.values[g % nb])
                .collect();
            out.push(Irrep::new(
                format!("{}⊗{}", x.label, y.label),
                x.dim * y.dim,
                values,
            ));
        }
    }
    out
}

/// A finite group together with its validated character table.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryGroup {
    pub group: FiniteGroup,
    pub table: CharacterTable,
}

impl SymmetryGroup {
    pub fn cyclic(n: usize) -> Result<Self> {
        let group = FiniteGroup::cyclic(n)?;
        let table = character_table(&group, TableKind::Cyclic(n), crate::DEFAULT_TOL)?;
        Ok(Self { group, table })
    }

    pub fn trivial() -> Self {
        Self::cyclic(1).expect("trivial group is valid")
    }

    /// Direct product; irreps are the tensor products `π₁⊗π₂`.
    pub fn direct_product(a: &Self, b: &Self) -> Result<Self> {
        let group = FiniteGroup::direct_product(&a.group, &b.group);
        let table = character_table(
            &group,
            TableKind::Product(vec![a.table.clone(), b.table.clone()]),
            crate::DEFAULT_TOL,
        )?;
        Ok(Self { group, table })
    }

    pub fn user_supplied(group: FiniteGroup, irreps: Vec<Irrep>, tol: f64) -> Result<Self> {
        let table = character_table(&group, TableKind::UserSupplied(irreps), tol)?;
        Ok(Self { group, table })
    }
}

/// Convolution `(f∗k)(u) = (1/|G|) Σ_g f(g) k(g⁻¹u)`.
pub fn convolve(f: &[Complex64], k: &[Complex64], group: &FiniteGroup) -> Result<Vec<Complex64>> {
    let n = group.order();
    for (what, v) in [("convolution left factor", f), ("convolution right factor", k)] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                found: v.len(),
            });
        }
    }
    Ok((0..n)
        .map(|u| {
            (0..n)
                .map(|g| f[g] * k[group.mul(group.inv(g), u)])
                .sum::<Complex64>()
                / n as f64
        })
        .collect())
}

/// A left action of a finite group on an `m`-point grid, stored as exact
/// permutations: `perm[g][i]` is the index of `g·y_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupAction {
    group: FiniteGroup,
    space_size: usize,
    perm: Vec<Vec<usize>>,
}

impl GroupAction {
    /// Wraps permutation tables. Each row must be a bijection; the action
    /// axioms themselves are reported by [`check_action`].
    pub fn new(group: FiniteGroup, perm: Vec<Vec<usize>>) -> Result<Self> {
        if perm.len() != group.order() {
            return Err(Error::DimensionMismatch {
                what: "permutation rows",
                expected: group.order(),
                found: perm.len(),
            });
        }
        let m = perm.first().map_or(0, Vec::len);
        for (g, row) in perm.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "permutation row length",
                    expected: m,
                    found: row.len(),
                });
            }
            let mut seen = vec![false; m];
            for &j in row {
                if j >= m || seen[j] {
                    return Err(Error::InvalidArgument(format!(
                        "action of element {g} is not a bijection"
                    )));
                }
                seen[j] = true;
            }
        }
        Ok(Self {
            group,
            space_size: m,
            perm,
        })
    }

    /// Builds the permutation tables from a point map. Every image must land
    /// on a grid point within `tol`; approximate (nearest-point) actions are
    /// rejected.
    pub fn from_point_map<F>(
        group: FiniteGroup,
        points: &[Vec<f64>],
        map: F,
        tol: f64,
    ) -> Result<Self>
    where
        F: Fn(usize, &[f64]) -> Vec<f64>,
    {
        let mut perm = Vec::with_capacity(group.order());
        for g in 0..group.order() {
            let mut row = Vec::with_capacity(points.len());
            for (i, p) in points.iter().enumerate() {
                let image = map(g, p);
                let hit = points.iter().position(|q| {
                    q.len() == image.len() && q.iter().zip(&image).all(|(a, b)| (a - b).abs() <= tol)
                });
                match hit {
                    Some(j) => row.push(j),
                    None => {
                        return Err(Error::InvalidArgument(format!(
                            "image of point {i} under element {g} is not a grid point"
                        )))
                    }
                }
            }
            perm.push(row);
        }
        Self::new(group, perm)
    }

    /// Trivial group acting as the identity on `m` points.
    pub fn identity(m: usize) -> Self {
        Self {
            group: FiniteGroup::trivial(),
            space_size: m,
            perm: vec![(0..m).collect()],
        }
    }

    /// ℤ/2ℤ acting by index reversal `i ↦ m-1-i`; on a midpoint grid of
    /// [0,1] this is `t ↦ 1-t`.
    pub fn reversal(m: usize) -> Self {
        Self {
            group: FiniteGroup::cyclic(2).expect("order 2"),
            space_size: m,
            perm: vec![(0..m).collect(), (0..m).rev().collect()],
        }
    }

    /// Componentwise action of the product group on the product grid.
    /// Point `(i1, i2)` has index `i1 * m2 + i2`.
    pub fn product(a: &Self, b: &Self) -> Self {
        let group = FiniteGroup::direct_product(&a.group, &b.group);
        let (m1, m2) = (a.space_size, b.space_size);
        let nb = b.group.order();
        let perm = (0..group.order())
            .map(|g| {
                let (g1, g2) = (g / nb, g % nb);
                (0..m1 * m2)
                    .map(|i| a.perm[g1][i / m2] * m2 + b.perm[g2][i % m2])
                    .collect()
            })
            .collect();
        Self {
            group,
            space_size: m1 * m2,
            perm,
        }
    }

    pub fn group(&self) -> &FiniteGroup {
        &self.group
    }

    pub fn space_size(&self) -> usize {
        self.space_size
    }

    pub fn perm(&self) -> &[Vec<usize>] {
        &self.perm
    }

    /// Index of `g·y_i`.
    #[inline]
    pub fn apply(&self, g: usize, i: usize) -> usize {
        self.perm[g][i]
    }

    /// Linear map of the character projection `E_π` on grid functions:
    /// `(E_π z)(y_i) = (d_π/|G|) Σ_g χ_π(g) z(g⁻¹·y_i)`, returned as a list of
    /// `(coefficient, source-index table)` pairs, one per group element.
    fn projection_terms(&self, irrep: &Irrep) -> Vec<(Complex64, &[usize])> {
        let scale = irrep.dim as f64 / self.group.order() as f64;
        (0..self.group.order())
            .map(|g| (irrep.chi(g) * scale, self.perm[self.group.inv(g)].as_slice()))
            .collect()
    }

    /// Real coefficients of the projection; errors for complex characters.
    pub(crate) fn real_projection_terms(&self, irrep: &Irrep) -> Result<Vec<(f64, &[usize])>> {
        if !irrep.real_valued {
            return Err(Error::ComplexCharacter(irrep.label.clone()));
        }
        self.check_irrep(irrep)?;
        Ok(self.projection_terms(irrep).into_iter().map(|(c, p)| (c.re, p)).collect())
    }

    fn check_irrep(&self, irrep: &Irrep) -> Result<()> {
        if irrep.values.len() != self.group.order() {
            return Err(Error::DimensionMismatch {
                what: "character length",
                expected: self.group.order(),
                found: irrep.values.len(),
            });
        }
        Ok(())
    }
}

/// Character projection of a (complex) path:
/// `Z^π(y_i) = (d_π/|G|) Σ_g χ_π(g) z[g⁻¹·y_i]`.
pub fn project_path(z: &[Complex64], action: &GroupAction, irrep: &Irrep) -> Result<Vec<Complex64>> {
    if z.len() != action.space_size {
        return Err(Error::DimensionMismatch {
            what: "path length",
            expected: action.space_size,
            found: z.len(),
        });
    }
    action.check_irrep(irrep)?;
    let mut out = vec![Complex64::new(0.0, 0.0); z.len()];
    for (c, src) in action.projection_terms(irrep) {
        for (o, &j) in out.iter_mut().zip(src) {
            *o += c * z[j];
        }
    }
    Ok(out)
}

/// Real version of [`project_path`] for irreps with real characters.
pub fn project_real_path(z: &[f64], action: &GroupAction, irrep: &Irrep) -> Result<Vec<f64>> {
    if z.len() != action.space_size {
        return Err(Error::DimensionMismatch {
            what: "path length",
            expected: action.space_size,
            found: z.len(),
        });
    }
    let terms = action.real_projection_terms(irrep)?;
    let mut out = vec![0.0; z.len()];
    for (c, src) in terms {
        for (o, &j) in out.iter_mut().zip(src) {
            *o += c * z[j];
        }
    }
    Ok(out)
}

/// Outcome of [`check_action`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    /// `(g, h, i)` with `perm[gh][i] ≠ perm[g][perm[h][i]]`.
    pub axiom_violations: Vec<(usize, usize, usize)>,
    /// Identity element does not act trivially at these points.
    pub identity_violations: Vec<usize>,
    /// `(g, i, deviation)` where `|μ(g·y_i) − μ(y_i)| > tol`.
    pub weight_violations: Vec<(usize, usize, f64)>,
    /// `(g, i)` with `g ≠ e` and `g·y_i = y_i`. Informational only.
    pub fixed_points: Vec<(usize, usize)>,
    pub max_weight_deviation: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Verifies the left-action axiom and invariance of the quadrature weights.
pub fn check_action(action: &GroupAction, weights: &[f64], tol: f64) -> Result<ActionReport> {
    let m = action.space_size;
    if weights.len() != m {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: m,
            found: weights.len(),
        });
    }
    let group = &action.group;
    let n = group.order();
    let mut report = ActionReport {
        tol,
        ..Default::default()
    };
    for i in 0..m {
        if action.perm[group.identity()][i] != i {
            report.identity_violations.push(i);
        }
    }
    for g in 0..n {
        for h in 0..n {
            let gh = group.mul(g, h);
            for i in 0..m {
                if action.perm[gh][i] != action.perm[g][action.perm[h][i]] {
                    report.axiom_violations.push((g, h, i));
                }
            }
        }
        for i in 0..m {
            let j = action.perm[g][i];
            let dev = (weights[j] - weights[i]).abs();
            report.max_weight_deviation = report.max_weight_deviation.max(dev);
            if dev > tol {
                report.weight_violations.push((g, i, dev));
            }
            if g != group.identity() && j == i {
                report.fixed_points.push((g, i));
            }
        }
    }
    report.passed = report.axiom_violations.is_empty()
        && report.identity_violations.is_empty()
        && report.weight_violations.is_empty();
    Ok(report)
}

/// JSON form of a group, its character table and (optionally) an action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupBundle {
    pub order: usize,
    pub mul: Vec<usize>,
    pub inv: Vec<usize>,
    pub identity: usize,
    pub irreps: Vec<IrrepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perm: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrrepRecord {
    pub label: String,
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl GroupBundle {
    pub fn new(sym: &SymmetryGroup, action: Option<&GroupAction>) -> Self {
        let g = &sym.group;
        Self {
            order: g.order(),
            mul: g.mul.clone(),
            inv: g.inv.clone(),
            identity: g.identity(),
            irreps: sym
                .table
                .irreps()
                .iter()
                .map(|i| IrrepRecord {
                    label: i.label.clone(),
                    dim: i.dim,
                    re: i.values.iter().map(|v| v.re).collect(),
                    im: i.values.iter().map(|v| v.im).collect(),
                })
                .collect(),
            perm: action.map(|a| a.perm.iter().flatten().copied().collect()),
        }
    }

    /// Rebuilds and re-validates the group, table and action.
    pub fn decode(&self, tol: f64) -> Result<(SymmetryGroup, Option<GroupAction>)> {
        let group = FiniteGroup::from_tables(self.mul.clone(), self.inv.clone(), self.identity)?;
        if group.order() != self.order {
            return Err(Error::DimensionMismatch {
                what: "group order",
                expected: self.order,
                found: group.order(),
            });
        }
        let irreps = self
            .irreps
            .iter()
            .map(|r| {
                if r.re.len() != r.im.len() {
                    return Err(Error::TableInvalid(format!(
                        "irrep {} has mismatched re/im lengths",
                        r.label
                    )));
                }
                let values = r.re.iter().zip(&r.im).map(|(&a, &b)| Complex64::new(a, b)).collect();
                Ok(Irrep::new(r.label.clone(), r.dim, values))
            })
            .collect::<Result<Vec<_>>>()?;
        let sym = SymmetryGroup::user_supplied(group, irreps, tol)?;
        let action = match &self.perm {
            None => None,
            Some(flat) => {
                if flat.len() % self.order != 0 {
                    return Err(Error::InvalidArgument(
                        "permutation table length is not a multiple of the group order".into(),
                    ));
                }
                let m = flat.len() / self.order;
                let rows = flat.chunks(m.max(1)).map(<[usize]>::to_vec).collect();
                Some(GroupAction::new(sym.group.clone(), rows)?)
            }
        };
        Ok((sym, action))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn cyclic_tables() {
        let z2 = FiniteGroup::cyclic(2).unwrap();
        assert_eq!(z2.mul(1, 1), 0);
        assert_eq!(z2.inv(1), 1);
        let z1 = FiniteGroup::cyclic(1).unwrap();
        assert_eq!(z1.order(), 1);
        assert_eq!(z1.identity(), 0);
        let z4 = FiniteGroup::cyclic(4).unwrap();
        assert_eq!(z4.inv(1), 3);
        assert_eq!(z4.mul(2, 3), 1);
        assert!(matches!(FiniteGroup::cyclic(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn from_tables_rejects_non_group() {
        // Row 1 is not a permutation.
        let err = FiniteGroup::from_tables(vec![0, 1, 1, 1], vec![0, 1], 0);
        assert!(err.is_err());
        assert!(FiniteGroup::from_tables(vec![0, 1, 1, 0], vec![0, 1], 0).is_ok());
    }

    #[test]
    fn z2_characters() {
        let s = SymmetryGroup::cyclic(2).unwrap();
        let u = s.table.get("pi_u").unwrap();
        let a = s.table.get("pi_a").unwrap();
        assert_eq!(u.values, vec![c(1.0), c(1.0)]);
        assert_eq!(a.values, vec![c(1.0), c(-1.0)]);
        assert!(u.real_valued && a.real_valued);
    }

    #[test]
    fn z3_characters_are_complex() {
        let s = SymmetryGroup::cyclic(3).unwrap();
        let flags: Vec<bool> = s.table.irreps().iter().map(|i| i.real_valued).collect();
        assert_eq!(flags, vec![true, false, false]);
        let w = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
        let chi1 = &s.table.irreps()[1];
        assert!((chi1.values[1] - w).norm() < 1e-15);
        assert!((chi1.values[2] - w * w).norm() < 1e-15);
        assert!(s.table.orthogonality_defect() < 1e-12);
    }

    #[test]
    fn trivial_table() {
        let s = SymmetryGroup::trivial();
        assert_eq!(s.table.len(), 1);
        assert_eq!(s.table.irreps()[0].values, vec![c(1.0)]);
    }

    #[test]
    fn z2_squared_labels() {
        let z2 = SymmetryGroup::cyclic(2).unwrap();
        let p = SymmetryGroup::direct_product(&z2, &z2).unwrap();
        let labels: Vec<&str> = p.table.irreps().iter().map(|i| i.label.as_str()).collect();
        assert_eq!(labels, vec!["pi_u⊗pi_u", "pi_u⊗pi_a", "pi_a⊗pi_u", "pi_a⊗pi_a"]);
        assert!(p.table.irreps().iter().all(|i| i.dim == 1 && i.real_valued));
    }

    #[test]
    fn trivial_times_g_is_g() {
        let z3 = SymmetryGroup::cyclic(3).unwrap();
        let p = SymmetryGroup::direct_product(&SymmetryGroup::trivial(), &z3).unwrap();
        assert_eq!(p.group, z3.group);
        for (a, b) in p.table.irreps().iter().zip(z3.table.irreps()) {
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn user_supplied_rejects_bad_table() {
        let g = FiniteGroup::cyclic(2).unwrap();
        let bad = vec![
            Irrep::new("a", 1, vec![c(1.0), c(1.0)]),
            Irrep::new("b", 1, vec![c(1.0), c(1.0)]),
        ];
        let err = SymmetryGroup::user_supplied(g.clone(), bad, 1e-10).unwrap_err();
        assert!(err.to_string().contains("δ_πσ"), "{err}");
        let wrong_dim = vec![Irrep::new("a", 2, vec![c(1.0), c(1.0)])];
        assert!(SymmetryGroup::user_supplied(g, wrong_dim, 1e-10).is_err());
    }

    #[test]
    fn convolution_examples() {
        let g = FiniteGroup::cyclic(2).unwrap();
        let out = convolve(&[c(1.0), c(2.0)], &[c(3.0), c(4.0)], &g).unwrap();
        assert_eq!(out, vec![c(5.5), c(5.0)]);

        let g4 = FiniteGroup::cyclic(4).unwrap();
        let delta = vec![c(4.0), c(0.0), c(0.0), c(0.0)];
        let k = vec![c(1.0), c(-2.0), c(0.5), c(3.0)];
        assert_eq!(convolve(&delta, &k, &g4).unwrap(), k);
        assert!(convolve(&delta[..3], &k, &g4).is_err());
    }

    #[test]
    fn characters_are_idempotent_under_convolution() {
        for sym in [SymmetryGroup::cyclic(2).unwrap(), SymmetryGroup::cyclic(5).unwrap()] {
            for irrep in sym.table.irreps() {
                let conv = convolve(&irrep.values, &irrep.values, &sym.group).unwrap();
                for (x, y) in conv.iter().zip(&irrep.values) {
                    assert!((x - y / irrep.dim as f64).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_path_projections() {
        let sym = SymmetryGroup::cyclic(2).unwrap();
        let action = GroupAction::reversal(6);
        let z = vec![2.5; 6];
        let u = project_real_path(&z, &action, sym.table.get("pi_u").unwrap()).unwrap();
        let a = project_real_path(&z, &action, sym.table.get("pi_a").unwrap()).unwrap();
        assert_eq!(u, z);
        assert_eq!(a, vec![0.0; 6]);
    }

    #[test]
    fn project_real_path_rejects_complex() {
        let sym = SymmetryGroup::cyclic(3).unwrap();
        let action = GroupAction::new(
            sym.group.clone(),
            vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]],
        )
        .unwrap();
        let err = project_real_path(&[1.0, 2.0, 3.0], &action, &sym.table.irreps()[1]);
        assert!(matches!(err, Err(Error::ComplexCharacter(_))));
        assert!(project_real_path(&[1.0], &action, &sym.table.irreps()[0]).is_err());
    }

    #[test]
    fn action_reports() {
        let id = GroupAction::identity(5);
        assert!(check_action(&id, &[0.2; 5], 1e-12).unwrap().passed);

        let n = 8;
        let rev = GroupAction::reversal(n);
        let r = check_action(&rev, &vec![1.0 / n as f64; n], 0.0).unwrap();
        assert!(r.passed && r.fixed_points.is_empty());

        // Endpoint grid i/N with trapezoid weights: N = 4 has a fixed point at 1/2.
        for (big_n, fixed) in [(4usize, Some(2usize)), (3, None)] {
            let m = big_n + 1;
            let mut w = vec![1.0 / big_n as f64; m];
            w[0] /= 2.0;
            w[m - 1] /= 2.0;
            let r = check_action(&GroupAction::reversal(m), &w, 1e-15).unwrap();
            assert!(r.passed);
            assert_eq!(r.fixed_points.first().map(|p| p.1), fixed);
        }

        // Non-invariant weights are flagged.
        let r = check_action(&GroupAction::reversal(3), &[0.5, 0.3, 0.2], 1e-12).unwrap();
        assert!(!r.passed);
        assert_eq!(r.weight_violations.len(), 2);
    }

    #[test]
    fn bad_action_axiom_is_reported() {
        // ℤ/3ℤ where element 2 acts like element 1: violates perm[gh] = perm[g]∘perm[h].
        let g = FiniteGroup::cyclic(3).unwrap();
        let a = GroupAction::new(g, vec![vec![0, 1, 2], vec![1, 2, 0], vec![1, 2, 0]]).unwrap();
        let r = check_action(&a, &[1.0; 3], 1e-12).unwrap();
        assert!(!r.passed && !r.axiom_violations.is_empty());
    }

    #[test]
    fn point_map_action() {
        let pts: Vec<Vec<f64>> = (0..4).map(|i| vec![(i as f64 + 0.5) / 4.0]).collect();
        let g = FiniteGroup::cyclic(2).unwrap();
        let a = GroupAction::from_point_map(g.clone(), &pts, |e, p| {
            if e == 0 { p.to_vec() } else { vec![1.0 - p[0]] }
        }, 1e-12)
        .unwrap();
        assert_eq!(a.perm()[1], vec![3, 2, 1, 0]);
        let shifted = GroupAction::from_point_map(g, &pts, |e, p| {
            if e == 0 { p.to_vec() } else { vec![1.0 - p[0] + 0.01] }
        }, 1e-12);
        assert!(shifted.is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let z2 = SymmetryGroup::cyclic(2).unwrap();
        let sym = SymmetryGroup::direct_product(&z2, &SymmetryGroup::cyclic(3).unwrap()).unwrap();
        let bundle = GroupBundle::new(&z2, Some(&GroupAction::reversal(4)));
        let back: GroupBundle = serde_json::from_str(&serde_json::to_string(&bundle).unwrap()).unwrap();
        let (sym2, action) = back.decode(1e-10).unwrap();
        assert_eq!(sym2, z2);
        assert_eq!(action.unwrap().perm()[1], vec![3, 2, 1, 0]);
        let (sym6, none) = GroupBundle::new(&sym, None).decode(1e-10).unwrap();
        assert_eq!(sym6.table.len(), 6);
        assert!(none.is_none());
    }
}
