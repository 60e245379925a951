use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Name and shape of one parameter block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayerShape {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Self { name: name.into(), shape }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// One parameter block after unflattening.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub layout: LayerShape,
    pub values: Vec<f64>,
}

/// All network parameters in one flat buffer with a deterministic layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Vec<LayerShape>,
}

impl ParameterVector {
    pub fn new(layout: Vec<LayerShape>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = layout.iter().map(LayerShape::numel).sum();
        if values.len() != expected {
            return Err(contract(format!(
                "parameter vector has {} values but layout requires {expected}",
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Vec<LayerShape>) -> Self {
        let n = layout.iter().map(LayerShape::numel).sum();
        Self { values: vec![0.0; n], layout }
    }

    /// A zero vector with the same layout as `self`.
    pub fn zeros_like(&self) -> Self {
        Self { values: vec![0.0; self.values.len()], layout: self.layout.clone() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &[LayerShape] {
        &self.layout
    }

    /// Offset of the named block in the flat buffer.
    pub fn offset_of(&self, name: &str) -> Option<usize> {
        let mut offset = 0;
        for block in &self.layout {
            if block.name == name {
                return Some(offset);
            }
            offset += block.numel();
        }
        None
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        let start = self.offset_of(name)?;
        let block = self.layout.iter().find(|b| b.name == name)?;
        Some(&self.values[start..start + block.numel()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let start = self.offset_of(name)?;
        let n = self.layout.iter().find(|b| b.name == name)?.numel();
        Some(&mut self.values[start..start + n])
    }

    /// Splits the flat buffer into its named blocks.
    pub fn unflatten(&self) -> Vec<Segment> {
        let mut offset = 0;
        self.layout
            .iter()
            .map(|block| {
                let n = block.numel();
                let seg = Segment { layout: block.clone(), values: self.values[offset..offset + n].to_vec() };
                offset += n;
                seg
            })
            .collect()
    }

    /// Inverse of [`ParameterVector::unflatten`].
    pub fn flatten(segments: Vec<Segment>) -> Result<Self> {
        let mut layout = Vec::with_capacity(segments.len());
        let mut values = Vec::new();
        for seg in segments {
            if seg.values.len() != seg.layout.numel() {
                return Err(contract(format!("segment `{}` has wrong length", seg.layout.name)));
            }
            values.extend_from_slice(&seg.values);
            layout.push(seg.layout);
        }
        Ok(Self { values, layout })
    }
}
