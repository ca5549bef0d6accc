//! Design-study label grammar, e.g. `G-cg-q-12o` or `R-12!`.
//!
//! ```text
//! label  := base ( '-' seg )* '!'?
//! base   := 'S' | 'R' | 'G'
//! seg    := feats | rank | tmix        (in this order, each at most once)
//! feats  := one or more of 'p' 'c' 'g', no repeats
//! rank   := 'q' | 'v'
//! tmix   := ( '1' | '2' | '12' ) 'o'?
//! ```

use alloc::format;
use alloc::string::String;

use crate::error::{Error, Result};
use crate::head::{Base, HeadConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rank {
    Full,
    Q,
    V,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Label {
    pub base: Base,
    pub rope: bool,
    pub conv: bool,
    pub gates: bool,
    pub rank: Rank,
    pub tmix_1: bool,
    pub tmix_2: bool,
    pub offset: bool,
    pub overparam: bool,
}

/// Every label of the design-study table, in table order.
pub const TABLE_LABELS: [&str; 33] = [
    "S", "S-p", "S-c", "S-pc", "R", "R-p", "R-c", "R-pc", "S-g-q", "R-cg-q", "R-c-12o!", "R-cg-q-12o", "R-pcg-q-12o",
    "S-c-q", "S-c-v", "R-c-q", "R-c-v", "G-cg-q", "G-c-12o!", "G-cg-q-12o", "G-pcg-q-12o", "G-cg-q-1o", "R-cg-q-1o",
    "G-g-q-12o", "R-g-q-12o", "G-12o!", "G-1o!", "G-2o!", "R-12o!", "R-1o!", "R-2!", "G-12!", "R-12!",
];

fn err(pos: usize, msg: impl Into<String>) -> Error {
    Error::Parse { pos, msg: msg.into() }
}

#[derive(PartialEq, PartialOrd)]
enum Stage {
    Base,
    Feats,
    Rank,
    Tmix,
}

pub fn parse_label(s: &str) -> Result<Label> {
    if s.is_empty() {
        return Err(err(0, "empty label"));
    }
    if let Some(pos) = s.bytes().position(|b| !b.is_ascii()) {
        return Err(err(pos, "non-ASCII character"));
    }
    let (body, overparam) = match s.strip_suffix('!') {
        Some(rest) => (rest, true),
        None => (s, false),
    };
    if let Some(pos) = body.find('!') {
        return Err(err(pos, "'!' may only end the label"));
    }
    let mut label = Label {
        base: Base::Softmax,
        rope: false,
        conv: false,
        gates: false,
        rank: Rank::Full,
        tmix_1: false,
        tmix_2: false,
        offset: false,
        overparam,
    };
    let mut stage = Stage::Base;
    let mut pos = 0;
    for (k, seg) in body.split('-').enumerate() {
        if seg.is_empty() {
            return Err(err(pos, "empty segment"));
        }
        if k == 0 {
            label.base = match seg {
                "S" => Base::Softmax,
                "R" => Base::ReluL2,
                "G" => Base::Glu,
                _ => return Err(err(0, format!("unknown base '{seg}', expected S, R or G"))),
            };
        } else {
            let first = seg.as_bytes()[0];
            let here = match first {
                b'p' | b'c' | b'g' => Stage::Feats,
                b'q' | b'v' => Stage::Rank,
                b'1' | b'2' => Stage::Tmix,
                _ => return Err(err(pos, format!("unknown modifier '{}'", first as char))),
            };
            if here <= stage {
                return Err(err(pos, "segment out of order or repeated"));
            }
            match here {
                Stage::Feats => parse_feats(seg, pos, &mut label)?,
                Stage::Rank => {
                    if seg.len() != 1 {
                        return Err(err(pos + 1, "rank segment is a single 'q' or 'v'"));
                    }
                    label.rank = if first == b'q' { Rank::Q } else { Rank::V };
                }
                Stage::Tmix => parse_tmix(seg, pos, &mut label)?,
                Stage::Base => unreachable!(),
            }
            stage = here;
        }
        pos += seg.len() + 1;
    }
    if label.overparam && label.rank != Rank::Full {
        return Err(err(s.len() - 1, "'!' cannot be combined with q/v compression"));
    }
    Ok(label)
}

fn parse_feats(seg: &str, pos: usize, label: &mut Label) -> Result<()> {
    for (i, ch) in seg.char_indices() {
        let flag = match ch {
            'p' => &mut label.rope,
            'c' => &mut label.conv,
            'g' => &mut label.gates,
            _ => return Err(err(pos + i, format!("unexpected '{ch}' in feature segment"))),
        };
        if *flag {
            return Err(err(pos + i, format!("duplicate modifier '{ch}'")));
        }
        *flag = true;
    }
    Ok(())
}

fn parse_tmix(seg: &str, pos: usize, label: &mut Label) -> Result<()> {
    let (digits, offset) = match seg.strip_suffix('o') {
        Some(d) => (d, true),
        None => (seg, false),
    };
    match digits {
        "1" => label.tmix_1 = true,
        "2" => label.tmix_2 = true,
        "12" => {
            label.tmix_1 = true;
            label.tmix_2 = true;
        }
        _ => {
            let bad = digits
                .char_indices()
                .find(|&(i, c)| !matches!((i, c), (0, '1' | '2') | (1, '2')))
                .map_or(digits.len(), |(i, _)| i);
            return Err(err(pos + bad, "mixing segment must be 1, 2 or 12, optionally followed by 'o'"));
        }
    }
    label.offset = offset;
    Ok(())
}

/// Canonical form: features in `pcg` order.
pub fn render_label(l: &Label) -> String {
    let mut s = String::from(match l.base {
        Base::Softmax => "S",
        Base::ReluL2 => "R",
        Base::Glu => "G",
    });
    if l.rope || l.conv || l.gates {
        s.push('-');
        for (on, ch) in [(l.rope, 'p'), (l.conv, 'c'), (l.gates, 'g')] {
            if on {
                s.push(ch);
            }
        }
    }
    match l.rank {
        Rank::Full => {}
        Rank::Q => s.push_str("-q"),
        Rank::V => s.push_str("-v"),
    }
    if l.tmix_1 || l.tmix_2 {
        s.push('-');
        if l.tmix_1 {
            s.push('1');
        }
        if l.tmix_2 {
            s.push('2');
        }
        if l.offset {
            s.push('o');
        }
    }
    if l.overparam {
        s.push('!');
    }
    s
}

/// Head configuration at width `d`. Uncompressed ranks are `d / n_head`;
/// `q` (resp. `v`) compresses `d_qk` (resp. `d_vo`) to `d / (4 n_head)`.
pub fn to_config(l: &Label, d: usize, n_head: usize, r_s: usize) -> Result<HeadConfig> {
    if n_head == 0 || d % n_head != 0 {
        return Err(Error::Config(format!("d={d} is not divisible by n_head={n_head}")));
    }
    let full = d / n_head;
    let compressed = || {
        if d % (4 * n_head) != 0 {
            Err(Error::Config(format!("d={d} is not divisible by 4*n_head={}", 4 * n_head)))
        } else {
            Ok(d / (4 * n_head))
        }
    };
    let d_qk = if l.rank == Rank::Q { compressed()? } else { full };
    let d_vo = if l.rank == Rank::V { compressed()? } else { full };
    let cfg = HeadConfig {
        d,
        n_head,
        d_qk,
        d_vo,
        r_s,
        l_max: 64,
        base: l.base,
        use_rope: l.rope,
        use_conv: l.conv,
        use_core_gates: l.gates,
        tmix_1: l.tmix_1,
        tmix_2: l.tmix_2,
        lag_layout: l.offset,
        overparam: l.overparam,
        eps: 1e-12,
    };
    cfg.validate()?;
    Ok(cfg)
}
