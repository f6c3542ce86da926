//! Metrics, role-tagged vector tuples, and their file formats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Euclidean,
    Minkowski,
}

/// An inner product on R^dim. Minkowski uses signature (+, -, ..., -) with
/// the timelike axis first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Metric {
    pub kind: MetricKind,
    pub dim: usize,
}

impl Metric {
    pub fn euclidean(dim: usize) -> Self {
        Self { kind: MetricKind::Euclidean, dim }
    }

    pub fn minkowski(dim: usize) -> Self {
        Self { kind: MetricKind::Minkowski, dim }
    }

    /// Diagonal entry `i` of the signature matrix.
    pub fn sign(&self, i: usize) -> f64 {
        match self.kind {
            MetricKind::Euclidean => 1.0,
            MetricKind::Minkowski if i == 0 => 1.0,
            MetricKind::Minkowski => -1.0,
        }
    }

    /// The signature matrix: identity, or `diag(1, -1, ..., -1)`.
    pub fn signature(&self) -> Mat {
        let diag: Vec<f64> = (0..self.dim).map(|i| self.sign(i)).collect();
        Mat::diagonal(&diag)
    }

    pub fn inner(&self, a: &Vector, b: &Vector) -> Result<f64> {
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: a.dim() });
        }
        if b.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: b.dim() });
        }
        Ok(self.inner_unchecked(a, b))
    }

    pub(crate) fn inner_unchecked(&self, a: &Vector, b: &Vector) -> f64 {
        match self.kind {
            MetricKind::Euclidean => a.dot(b),
            MetricKind::Minkowski => {
                let (a, b) = (a.as_slice(), b.as_slice());
                let space: f64 = a[1..].iter().zip(&b[1..]).map(|(x, y)| x * y).sum();
                a[0] * b[0] - space
            }
        }
    }
}

/// `inner(metric, a, b)` as a free function.
pub fn inner(metric: &Metric, a: &Vector, b: &Vector) -> Result<f64> {
    metric.inner(a, b)
}

/// How translations act on a slot: positions shift, free vectors do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Position,
    Free,
}

impl Role {
    fn short(self) -> &'static str {
        match self {
            Role::Position => "p",
            Role::Free => "f",
        }
    }

    fn parse_short(s: &str) -> Result<Self> {
        match s.trim() {
            "p" | "position" => Ok(Role::Position),
            "f" | "free" => Ok(Role::Free),
            other => Err(Error::InvalidArgument(format!("unknown role `{other}`"))),
        }
    }
}

/// An ordered list of same-dimension vectors with per-slot role tags.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTuple {
    dim: usize,
    vectors: Vec<Vector>,
    roles: Vec<Role>,
}

impl VectorTuple {
    pub fn new(dim: usize, vectors: Vec<Vector>, roles: Vec<Role>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("tuple dimension"));
        }
        if roles.len() != vectors.len() {
            return Err(Error::InvalidArgument(format!(
                "{} roles for {} vectors",
                roles.len(),
                vectors.len()
            )));
        }
        if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        Ok(Self { dim, vectors, roles })
    }

    /// All slots tagged [`Role::Free`].
    pub fn free(dim: usize, vectors: Vec<Vector>) -> Result<Self> {
        let roles = vec![Role::Free; vectors.len()];
        Self::new(dim, vectors, roles)
    }

    pub fn from_rows(rows: &[Vec<f64>], roles: Vec<Role>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let vectors = rows.iter().map(|r| Vector::new(r.clone())).collect::<Result<_>>()?;
        Self::new(dim, vectors, roles)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn get(&self, i: usize) -> &Vector {
        &self.vectors[i]
    }

    pub fn position_indices(&self) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == Role::Position)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn into_parts(self) -> (usize, Vec<Vector>, Vec<Role>) {
        (self.dim, self.vectors, self.roles)
    }

    /// Largest componentwise difference to another tuple of the same shape.
    pub fn max_abs_diff(&self, other: &VectorTuple) -> f64 {
        self.vectors
            .iter()
            .zip(&other.vectors)
            .map(|(a, b)| (a - b).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TupleFile::from(self)).expect("tuple serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TupleFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        file.try_into()
    }

    /// One vector per row, comma separated, with an optional
    /// `#roles: p,f,...` header. Missing roles default to free.
    pub fn from_csv(text: &str) -> Result<Self> {
        let roles = text
            .lines()
            .filter_map(|l| l.trim().strip_prefix('#')?.trim().strip_prefix("roles:"))
            .next()
            .map(|spec| spec.split(',').map(Role::parse_short).collect::<Result<Vec<_>>>())
            .transpose()?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::InvalidArgument(e.to_string()))?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            let row = record
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number `{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let roles = roles.unwrap_or_else(|| vec![Role::Free; rows.len()]);
        Self::from_rows(&rows, roles)
    }

    pub fn to_csv(&self) -> String {
        let roles: Vec<&str> = self.roles.iter().map(|r| r.short()).collect();
        let mut writer = csv::Writer::from_writer(format!("#roles: {}\n", roles.join(",")).into_bytes());
        for v in &self.vectors {
            writer.write_record(v.as_slice().iter().map(|x| format!("{x:?}"))).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// JSON form: `{"d": 3, "vectors": [[..], ..], "roles": ["position", ..]}`.
#[derive(Debug, Serialize, Deserialize)]
struct TupleFile {
    d: usize,
    vectors: Vec<Vec<f64>>,
    #[serde(default)]
    roles: Option<Vec<Role>>,
}

impl From<&VectorTuple> for TupleFile {
    fn from(t: &VectorTuple) -> Self {
        Self {
            d: t.dim,
            vectors: t.vectors.iter().map(|v| v.as_slice().to_vec()).collect(),
            roles: Some(t.roles.clone()),
        }
    }
}

impl TryFrom<TupleFile> for VectorTuple {
    type Error = Error;
    fn try_from(f: TupleFile) -> Result<Self> {
        let roles = f.roles.unwrap_or_else(|| vec![Role::Free; f.vectors.len()]);
        let vectors = f.vectors.into_iter().map(Vector::new).collect::<Result<_>>()?;
        VectorTuple::new(f.d, vectors, roles)
    }
}

impl Serialize for VectorTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TupleFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for VectorTuple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        TupleFile::deserialize(d)?.try_into().map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let e = Metric::euclidean(2);
        assert_eq!(e.inner(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let m = Metric::minkowski(4);
        let t = v(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.inner(&t, &t).unwrap(), 1.0);
        let light = v(&[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.inner(&light, &light).unwrap(), 0.0);
    }

    #[test]
    fn inner_dimension_mismatch_names_both() {
        let m = Metric::euclidean(3);
        let err = m.inner(&v(&[1.0, 2.0]), &v(&[1.0, 2.0, 3.0])).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, found: 2 });
    }

    #[test]
    fn minkowski_signature_is_exact() {
        let sig = Metric::minkowski(4).signature();
        assert_eq!(sig, Mat::diagonal(&[1.0, -1.0, -1.0, -1.0]));
    }

    #[test]
    fn tuple_rejects_ragged_and_mismatched_roles() {
        assert!(VectorTuple::new(2, vec![v(&[1.0, 2.0]), v(&[1.0])], vec![Role::Free; 2]).is_err());
        assert!(VectorTuple::new(2, vec![v(&[1.0, 2.0])], vec![]).is_err());
    }

    #[test]
    fn json_and_csv_round_trip() {
        let t = VectorTuple::new(
            2,
            vec![v(&[1.0, 2.5]), v(&[-0.125, 3.0])],
            vec![Role::Position, Role::Free],
        )
        .unwrap();
        let json = t.to_json();
        assert!(json.contains("\"roles\":[\"position\",\"free\"]"));
        assert_eq!(VectorTuple::from_json(&json).unwrap(), t);
        let csv = t.to_csv();
        assert!(csv.starts_with("#roles: p,f"));
        assert_eq!(VectorTuple::from_csv(&csv).unwrap(), t);
    }

    #[test]
    fn json_rejects_nan_like_input() {
        assert!(VectorTuple::from_json(r#"{"d":1,"vectors":[[1e999]]}"#).is_err());
    }
}
