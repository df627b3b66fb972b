use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// The scalar α of a continuous or mixed column.
    Alpha,
    /// Mode one-hot β of a continuous or mixed column.
    Mode,
    /// Class one-hot γ of a categorical column.
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// Column position in encoding order.
    pub column: usize,
    pub offset: usize,
    pub width: usize,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width
    }

    pub fn is_one_hot(&self) -> bool {
        self.kind != SegmentKind::Alpha
    }
}

/// Where each column's pieces sit in an encoded row.
///
/// Continuous and mixed columns come first as `α ⊕ β` pairs, followed by the
/// categorical `γ` blocks. Segments are contiguous and cover the row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingLayout {
    segments: Vec<Segment>,
    width: usize,
    n_columns: usize,
}

impl EncodingLayout {
    /// Builds a layout from `(is_numeric, one_hot_width)` per column, in
    /// encoding order.
    pub fn new(columns: &[(bool, usize)]) -> Self {
        let mut segments = Vec::new();
        let mut offset = 0;
        for (column, &(numeric, width)) in columns.iter().enumerate() {
            if numeric {
                segments.push(Segment {
                    column,
                    offset,
                    width: 1,
                    kind: SegmentKind::Alpha,
                });
                offset += 1;
                if width > 0 {
                    segments.push(Segment {
                        column,
                        offset,
                        width,
                        kind: SegmentKind::Mode,
                    });
                    offset += width;
                }
            } else {
                segments.push(Segment {
                    column,
                    offset,
                    width,
                    kind: SegmentKind::Class,
                });
                offset += width;
            }
        }
        EncodingLayout {
            segments,
            width: offset,
            n_columns: columns.len(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn one_hot_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.is_one_hot())
    }

    pub fn alpha_of(&self, column: usize) -> Option<&Segment> {
        self.segments
            .iter()
            .find(|s| s.column == column && s.kind == SegmentKind::Alpha)
    }

    pub fn one_hot_of(&self, column: usize) -> Option<&Segment> {
        self.segments
            .iter()
            .find(|s| s.column == column && s.is_one_hot())
    }
}
