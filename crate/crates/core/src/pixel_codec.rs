//! Integer average/difference transform on pixel pairs and single-bit
//! difference expansion.
//!
//! A pair `(x, y)` maps to `l = floor((x + y) / 2)`, `h = x - y`. The map is
//! a bijection onto the set of `(l, h)` satisfying
//! `|h| <= min(2 (255 - l), 2 l + 1)`, so any modified difference that stays
//! inside that bound reconstructs to valid gray levels.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("(l={l}, h={h}) reconstructs outside [0, 255]")]
    OutOfRange { l: i32, h: i32 },
    #[error("pair (l={l}, h={h}) is not expandable")]
    NotExpandable { l: i32, h: i32 },
    #[error("pair (l={l}, h={h}) is not changeable")]
    NotChangeable { l: i32, h: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelPair {
    pub x: u8,
    pub y: u8,
}

impl PixelPair {
    pub const fn new(x: u8, y: u8) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AvgDiff {
    pub l: i32,
    pub h: i32,
}

impl AvgDiff {
    pub const fn new(l: i32, h: i32) -> Self {
        Self { l, h }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairClass {
    /// `2h + b` fits the bound for both bits. Implies changeable.
    Expandable,
    /// `2 floor(h/2) + b` fits the bound for both bits, `2h + b` does not.
    Changeable,
    Unchangeable,
}

impl PairClass {
    pub fn is_changeable(self) -> bool {
        !matches!(self, PairClass::Unchangeable)
    }

    pub fn is_expandable(self) -> bool {
        matches!(self, PairClass::Expandable)
    }
}

/// Largest admissible `|h|` for average `l`.
#[inline]
pub fn difference_bound(l: i32) -> i32 {
    (2 * (255 - l)).min(2 * l + 1)
}

#[inline]
fn fits(l: i32, h: i32) -> bool {
    (0..=255).contains(&l) && h.abs() <= difference_bound(l)
}

#[inline]
pub fn forward_transform(p: PixelPair) -> AvgDiff {
    let (x, y) = (i32::from(p.x), i32::from(p.y));
    AvgDiff {
        l: (x + y).div_euclid(2),
        h: x - y,
    }
}

#[inline]
pub fn inverse_transform(a: AvgDiff) -> Result<PixelPair, CodecError> {
    let x = a.l + (a.h + 1).div_euclid(2);
    let y = a.l - a.h.div_euclid(2);
    match (u8::try_from(x), u8::try_from(y)) {
        (Ok(x), Ok(y)) => Ok(PixelPair { x, y }),
        _ => Err(CodecError::OutOfRange { l: a.l, h: a.h }),
    }
}

#[inline]
pub fn classify_pair(a: AvgDiff) -> PairClass {
    let expand_ok = fits(a.l, 2 * a.h) && fits(a.l, 2 * a.h + 1);
    if expand_ok {
        return PairClass::Expandable;
    }
    let base = 2 * a.h.div_euclid(2);
    if fits(a.l, base) && fits(a.l, base + 1) {
        PairClass::Changeable
    } else {
        PairClass::Unchangeable
    }
}

/// `h' = 2h + b`.
#[inline]
pub fn expand_embed_bit(a: AvgDiff, bit: bool) -> Result<AvgDiff, CodecError> {
    if classify_pair(a) != PairClass::Expandable {
        return Err(CodecError::NotExpandable { l: a.l, h: a.h });
    }
    Ok(AvgDiff {
        l: a.l,
        h: 2 * a.h + i32::from(bit),
    })
}

/// `h' = 2 floor(h/2) + b`. Accepts expandable pairs too, since they are
/// changeable.
#[inline]
pub fn lsb_replace_bit(a: AvgDiff, bit: bool) -> Result<AvgDiff, CodecError> {
    if !classify_pair(a).is_changeable() {
        return Err(CodecError::NotChangeable { l: a.l, h: a.h });
    }
    Ok(AvgDiff {
        l: a.l,
        h: 2 * a.h.div_euclid(2) + i32::from(bit),
    })
}

/// Floor-residue LSB: `h - 2 floor(h/2)`, so `-5` yields 1.
#[inline]
pub fn extract_bit(a: AvgDiff) -> bool {
    a.h.rem_euclid(2) == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_examples() {
        assert_eq!(
            forward_transform(PixelPair::new(206, 201)),
            AvgDiff::new(203, 5)
        );
        assert_eq!(forward_transform(PixelPair::new(0, 0)), AvgDiff::new(0, 0));
        assert_eq!(
            forward_transform(PixelPair::new(0, 255)),
            AvgDiff::new(127, -255)
        );
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(
            inverse_transform(AvgDiff::new(203, 5)),
            Ok(PixelPair::new(206, 201))
        );
        assert_eq!(
            inverse_transform(AvgDiff::new(127, -255)),
            Ok(PixelPair::new(0, 255))
        );
        assert_eq!(
            inverse_transform(AvgDiff::new(128, 0)),
            Ok(PixelPair::new(128, 128))
        );
        assert_eq!(
            inverse_transform(AvgDiff::new(127, -256)),
            Err(CodecError::OutOfRange { l: 127, h: -256 })
        );
        assert!(inverse_transform(AvgDiff::new(255, 1)).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_pair(AvgDiff::new(203, 5)), PairClass::Expandable);
        assert_eq!(classify_pair(AvgDiff::new(127, 255)), PairClass::Changeable);
        assert_eq!(
            classify_pair(AvgDiff::new(127, -255)),
            PairClass::Unchangeable
        );
    }

    #[test]
    fn embed_examples() {
        let a = |h| AvgDiff::new(128, h);
        assert_eq!(expand_embed_bit(a(5), true).unwrap().h, 11);
        assert_eq!(expand_embed_bit(a(0), false).unwrap().h, 0);
        assert_eq!(expand_embed_bit(a(-3), true).unwrap().h, -5);
        assert_eq!(
            expand_embed_bit(AvgDiff::new(127, 255), false),
            Err(CodecError::NotExpandable { l: 127, h: 255 })
        );

        assert_eq!(lsb_replace_bit(a(5), false).unwrap().h, 4);
        assert_eq!(lsb_replace_bit(a(5), true).unwrap().h, 5);
        assert_eq!(
            lsb_replace_bit(AvgDiff::new(127, -255), false),
            Err(CodecError::NotChangeable { l: 127, h: -255 })
        );
    }

    #[test]
    fn extract_examples() {
        assert!(extract_bit(AvgDiff::new(0, 11)));
        assert!(extract_bit(AvgDiff::new(0, -5)));
        assert!(!extract_bit(AvgDiff::new(0, 0)));
        assert!(!extract_bit(AvgDiff::new(0, -4)));
    }

    /// Reference check that does not consult `difference_bound`: a class is
    /// sound iff the modified difference reconstructs into gray levels.
    fn reconstructs(l: i32, h: i32) -> bool {
        let x = l + (h + 1).div_euclid(2);
        let y = l - h.div_euclid(2);
        (0..=255).contains(&x) && (0..=255).contains(&y)
    }

    #[test]
    fn exhaustive_pair_oracle() {
        for x in 0..=255u8 {
            for y in 0..=255u8 {
                let p = PixelPair::new(x, y);
                let a = forward_transform(p);
                assert_eq!(inverse_transform(a), Ok(p));

                let class = classify_pair(a);
                let exp = reconstructs(a.l, 2 * a.h) && reconstructs(a.l, 2 * a.h + 1);
                let fl = 2 * a.h.div_euclid(2);
                let chg = reconstructs(a.l, fl) && reconstructs(a.l, fl + 1);
                assert_eq!(class.is_expandable(), exp, "{p:?}");
                assert_eq!(class.is_changeable(), chg || exp, "{p:?}");
                if exp {
                    assert!(chg, "expandable but not changeable: {p:?}");
                }

                for bit in [false, true] {
                    if class.is_expandable() {
                        let e = expand_embed_bit(a, bit).unwrap();
                        assert_eq!(extract_bit(e), bit);
                        assert_eq!(e.h >> 1, a.h);
                        assert!(inverse_transform(e).is_ok());
                        // expanded pair stays changeable, so a blind decoder finds it
                        assert!(classify_pair(e).is_changeable());
                        assert_eq!(forward_transform(inverse_transform(e).unwrap()), e);
                    }
                    if class.is_changeable() {
                        let c = lsb_replace_bit(a, bit).unwrap();
                        assert_eq!(extract_bit(c), bit);
                        assert!(inverse_transform(c).is_ok());
                        assert!(classify_pair(c).is_changeable());
                        assert_eq!(forward_transform(inverse_transform(c).unwrap()), c);
                    }
                }
            }
        }
    }
}
