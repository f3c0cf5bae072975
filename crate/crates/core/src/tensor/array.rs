use std::fmt;

use super::TensorError;

/// Dense row-major array of `f64`.
///
/// Every public constructor rejects non-finite entries, so an `Array` seen
/// outside this module always holds finite values.
#[derive(Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFiniteInput {
                index: pos,
                value: data[pos],
            });
        }
        Ok(Array { shape, data })
    }

    /// Builds an array without the finiteness check. Shape/length must agree.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Array { shape, data }
    }

    pub fn scalar(value: f64) -> Self {
        Array::from_raw(Vec::new(), vec![value])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Array::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Array::from_raw(shape.to_vec(), vec![value; n])
    }

    /// 1-D array.
    pub fn vector(data: Vec<f64>) -> Result<Self, TensorError> {
        Array::new(vec![data.len()], data)
    }

    /// 2-D array from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let width = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in rows {
            if row.len() != width {
                return Err(TensorError::RaggedRows {
                    expected: width,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Array::new(vec![rows.len(), width], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a one-element array.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut offset = 0;
        for (&i, &extent) in index.iter().zip(&self.shape) {
            if i >= extent {
                return None;
            }
            offset = offset * extent + i;
        }
        Some(self.data[offset])
    }

    /// Number of rows along the leading axis.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Elements per leading-axis row.
    pub fn row_width(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_width();
        &self.data[i * w..(i + 1) * w]
    }

    /// Gathers rows along the leading axis.
    pub fn take_rows(&self, indices: &[usize]) -> Result<Array, TensorError> {
        if self.shape.is_empty() {
            return Err(TensorError::Rank {
                op: "take_rows",
                expected: 1,
                shape: self.shape.clone(),
            });
        }
        let w = self.row_width();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            if i >= self.shape[0] {
                return Err(TensorError::IndexOutOfRange {
                    index: i,
                    extent: self.shape[0],
                });
            }
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Array::from_raw(shape, data))
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Array, TensorError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape.clone(),
                right: shape,
            });
        }
        Ok(Array::from_raw(shape, self.data.clone()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array::from_raw(
            self.shape.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &Array) -> Option<f64> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

impl fmt::Debug for Array {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Array{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Numpy-style broadcast of two shapes (right-aligned, extents equal or 1).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n {
            a[i + a.len() - n]
        } else {
            1
        };
        let db = if i + b.len() >= n {
            b[i + b.len() - n]
        } else {
            1
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides for reading `shape` as if it were broadcast to `target`
/// (zero stride along broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], target: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let offset = target.len() - shape.len();
    (0..target.len())
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

/// Visits every multi-index of `shape` in row-major order, passing the
/// linear offsets into each of the strided views.
pub(crate) fn for_each_offset<const K: usize>(
    shape: &[usize],
    view_strides: [&[usize]; K],
    mut f: impl FnMut(usize, [usize; K]),
) {
    let total: usize = shape.iter().product();
    if total == 0 {
        return;
    }
    let nd = shape.len();
    let mut index = vec![0usize; nd];
    let mut offsets = [0usize; K];
    for linear in 0..total {
        f(linear, offsets);
        for axis in (0..nd).rev() {
            index[axis] += 1;
            for k in 0..K {
                offsets[k] += view_strides[k][axis];
            }
            if index[axis] < shape[axis] {
                break;
            }
            for k in 0..K {
                offsets[k] -= view_strides[k][axis] * shape[axis];
            }
            index[axis] = 0;
        }
    }
}

/// Sums `grad` (shaped `from`) down to the broadcast source shape `to`.
pub(crate) fn reduce_to_shape(grad: &Array, to: &[usize]) -> Array {
    if grad.shape() == to {
        return grad.clone();
    }
    let mut out = vec![0.0; to.iter().product()];
    let src = broadcast_strides(to, grad.shape());
    let unit = strides(grad.shape());
    for_each_offset(grad.shape(), [&unit, &src], |_, [g, o]| {
        out[o] += grad.data()[g];
    });
    Array::from_raw(to.to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length_and_nonfinite() {
        assert!(Array::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Array::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Array::new(vec![1], vec![f64::INFINITY]).is_err());
        assert!(Array::new(vec![0, 3], vec![]).is_ok());
    }

    #[test]
    fn broadcasting_rules() {
        assert_eq!(broadcast_shape(&[4, 3], &[3]), Some(vec![4, 3]));
        assert_eq!(broadcast_shape(&[4, 1], &[1, 5]), Some(vec![4, 5]));
        assert_eq!(broadcast_shape(&[], &[2, 2]), Some(vec![2, 2]));
        assert_eq!(broadcast_shape(&[4, 3], &[4]), None);
    }

    #[test]
    fn reduce_sums_broadcast_axes() {
        let g = Array::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(reduce_to_shape(&g, &[3]).data(), &[5., 7., 9.]);
        assert_eq!(reduce_to_shape(&g, &[2, 1]).data(), &[6., 15.]);
        assert_eq!(reduce_to_shape(&g, &[]).data(), &[21.]);
    }

    #[test]
    fn take_rows_and_get() {
        let a = Array::from_rows(&[vec![1., 2.], vec![3., 4.], vec![5., 6.]]).unwrap();
        let t = a.take_rows(&[2, 0]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[5., 6., 1., 2.]);
        assert_eq!(a.get(&[1, 1]), Some(4.0));
        assert_eq!(a.get(&[3, 0]), None);
        assert!(a.take_rows(&[3]).is_err());
    }
}
