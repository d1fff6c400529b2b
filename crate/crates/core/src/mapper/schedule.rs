//! Loop organization: split / reorder / bind primitives and the organized
//! loop structure they produce.
//!
//! Text form, one primitive per line:
//!
//! ```text
//! split x 256          # x -> x.o, x.i (factor divides the extent)
//! reorder x.o k x.i    # complete permutation of the current loops
//! bind x.o tile
//! bind x.i bitline     # unbound loops stay serial
//! ```

use super::ir::{LoopNest, MapError};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Level {
    Tile,
    Cram,
    Bitline,
    Serial,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Split { name: String, factor: u64 },
    Reorder(Vec<String>),
    Bind { name: String, level: Level },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    pub prims: Vec<Primitive>,
}

pub fn parse_schedule(text: &str) -> Result<Schedule, MapError> {
    let mut prims = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| MapError::ScheduleSyntax {
            line: lineno,
            msg,
        };
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("split") => {
                let name = parts.next().ok_or_else(|| err("missing loop".into()))?;
                let factor: u64 = parts
                    .next()
                    .ok_or_else(|| err("missing factor".into()))?
                    .parse()
                    .map_err(|_| err("bad factor".into()))?;
                prims.push(Primitive::Split {
                    name: name.to_string(),
                    factor,
                });
            }
            Some("reorder") => {
                prims.push(Primitive::Reorder(
                    parts.by_ref().map(str::to_string).collect(),
                ));
            }
            Some("bind") => {
                let name = parts.next().ok_or_else(|| err("missing loop".into()))?;
                let level = match parts.next() {
                    Some("tile") => Level::Tile,
                    Some("cram") => Level::Cram,
                    Some("bitline") => Level::Bitline,
                    Some("serial") => Level::Serial,
                    other => return Err(err(format!("bad level {other:?}"))),
                };
                prims.push(Primitive::Bind {
                    name: name.to_string(),
                    level,
                });
            }
            other => return Err(err(format!("unknown primitive {other:?}"))),
        }
        if let Some(extra) = parts.next() {
            return Err(err(format!("trailing token `{extra}`")));
        }
    }
    Ok(Schedule { prims })
}

/// One loop after organization. Its value contributes
/// `value * stride` to the original loop variable `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrgLoop {
    pub name: String,
    pub extent: u64,
    pub reduction: bool,
    pub level: Level,
    pub origin: String,
    pub stride: u64,
}

/// The organized loop structure: the declared loops with splits applied,
/// in schedule order, each bound to a hardware level.
#[derive(Debug, Clone, PartialEq)]
pub struct Organized {
    pub loops: Vec<OrgLoop>,
}

impl Organized {
    pub fn at(&self, level: Level) -> Vec<&OrgLoop> {
        self.loops.iter().filter(|l| l.level == level).collect()
    }

    pub fn find(&self, name: &str) -> Option<&OrgLoop> {
        self.loops.iter().find(|l| l.name == name)
    }

    /// All organized parts of one original loop.
    pub fn parts_of(&self, origin: &str) -> Vec<&OrgLoop> {
        self.loops.iter().filter(|l| l.origin == origin).collect()
    }
}

pub fn organize(nest: &LoopNest, schedule: &Schedule) -> Result<Organized, MapError> {
    let mut loops: Vec<OrgLoop> = nest
        .loops
        .iter()
        .map(|l| OrgLoop {
            name: l.name.clone(),
            extent: l.extent,
            reduction: l.reduction,
            level: Level::Serial,
            origin: l.name.clone(),
            stride: 1,
        })
        .collect();
    let nf = |name: &str| MapError::ScheduleSyntax {
        line: 0,
        msg: format!("unknown loop `{name}`"),
    };
    for prim in &schedule.prims {
        match prim {
            Primitive::Split { name, factor } => {
                let pos = loops
                    .iter()
                    .position(|l| &l.name == name)
                    .ok_or_else(|| nf(name))?;
                let l = loops[pos].clone();
                if *factor == 0 || l.extent % factor != 0 {
                    return Err(MapError::ScheduleSyntax {
                        line: 0,
                        msg: format!(
                            "split factor {factor} does not divide extent {} of `{name}`",
                            l.extent
                        ),
                    });
                }
                let outer = OrgLoop {
                    name: format!("{name}.o"),
                    extent: l.extent / factor,
                    stride: l.stride * factor,
                    ..l.clone()
                };
                let inner = OrgLoop {
                    name: format!("{name}.i"),
                    extent: *factor,
                    ..l
                };
                loops.splice(pos..=pos, [outer, inner]);
            }
            Primitive::Reorder(names) => {
                if names.len() != loops.len() {
                    return Err(MapError::ScheduleSyntax {
                        line: 0,
                        msg: format!(
                            "reorder lists {} loops, organization has {}",
                            names.len(),
                            loops.len()
                        ),
                    });
                }
                let mut reordered = Vec::with_capacity(loops.len());
                for n in names {
                    let pos = loops
                        .iter()
                        .position(|l| &l.name == n)
                        .ok_or_else(|| nf(n))?;
                    reordered.push(loops[pos].clone());
                }
                loops = reordered;
            }
            Primitive::Bind { name, level } => {
                let pos = loops
                    .iter()
                    .position(|l| &l.name == name)
                    .ok_or_else(|| nf(name))?;
                loops[pos].level = *level;
            }
        }
    }
    let org = Organized { loops };
    check_organization(nest, &org)?;
    Ok(org)
}

fn check_organization(_nest: &LoopNest, org: &Organized) -> Result<(), MapError> {
    let bitline = org.at(Level::Bitline);
    if bitline.len() != 1 {
        return Err(MapError::Infeasible(format!(
            "exactly one loop must be bound to bitline, found {}",
            bitline.len()
        )));
    }
    if bitline[0].reduction {
        return Err(MapError::Infeasible(
            "the bitline vector axis must be data-parallel".into(),
        ));
    }
    for l in org.at(Level::Tile) {
        if l.reduction {
            return Err(MapError::Infeasible(format!(
                "reduction loop `{}` may not be bound to tile",
                l.name
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::ir::parse_nest;

    fn nest() -> LoopNest {
        parse_nest(
            "\
tensor a (768, 1024, 256) i8
tensor b (1024, 320) i8
tensor c (768, 320, 256) i32
loop xo 768
loop y 320
rloop k 1024
loop xi 256
c[xo, y, xi] = sum(i32(a[xo, k, xi]) * i32(b[k, y]))
",
        )
        .unwrap()
    }

    #[test]
    fn split_reorder_bind_pipeline() {
        let sched = parse_schedule(
            "\
split xo 64
split y 32
split y.i 4
reorder xo.o y.o xo.i y.i.i xi k y.i.o
bind xo.o tile
bind y.o tile
bind xo.i cram
bind y.i.i cram
bind xi bitline
",
        )
        .unwrap();
        let org = organize(&nest(), &sched).unwrap();
        assert_eq!(org.at(Level::Tile).len(), 2);
        assert_eq!(org.at(Level::Cram).len(), 2);
        assert_eq!(org.at(Level::Bitline).len(), 1);
        let xo_o = org.find("xo.o").unwrap();
        assert_eq!((xo_o.extent, xo_o.stride), (12, 64));
        let y_i_o = org.find("y.i.o").unwrap();
        assert_eq!((y_i_o.extent, y_i_o.stride), (8, 4));
        assert_eq!(y_i_o.origin, "y");
        // serial loops in order: k then y.i.o
        let serial: Vec<&str> = org.at(Level::Serial).iter().map(|l| l.name.as_str()).collect();
        assert_eq!(serial, vec!["k", "y.i.o"]);
    }

    #[test]
    fn rejects_bad_schedules() {
        let n = nest();
        // non-dividing split
        assert!(organize(&n, &parse_schedule("split xo 100\nbind xi bitline").unwrap()).is_err());
        // missing bitline bind
        assert!(organize(&n, &parse_schedule("").unwrap()).is_err());
        // reduction on tile
        assert!(organize(
            &n,
            &parse_schedule("bind k tile\nbind xi bitline").unwrap()
        )
        .is_err());
        // reduction on bitline
        assert!(organize(&n, &parse_schedule("bind k bitline").unwrap()).is_err());
    }
}
