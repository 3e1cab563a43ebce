//! Per-frame point files accepted at ingest: PLY (ASCII or binary) and raw
//! little-endian `f32` XYZ blobs.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => {
                return Err(Error::format(
                    "ply",
                    format!("unknown scalar type `{other}`"),
                ))
            }
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read<R: Read>(self, r: &mut R, enc: Encoding) -> Result<f64> {
        let mut buf = [0u8; 8];
        let b = &mut buf[..self.size()];
        r.read_exact(b)?;
        if enc == Encoding::BinaryBe {
            b.reverse();
        }
        Ok(match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        })
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

fn parse_header<R: BufRead>(r: &mut R) -> Result<(Encoding, Vec<Element>)> {
    let mut line = String::new();
    let mut next_line = |r: &mut R| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::format("ply", "header ended early"));
        }
        Ok(line.trim().to_string())
    };
    if next_line(r)? != "ply" {
        return Err(Error::format("ply", "missing `ply` signature"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let l = next_line(r)?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    "binary_big_endian" => Encoding::BinaryBe,
                    other => return Err(Error::format("ply", format!("unknown format `{other}`"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format("ply", format!("bad element count `{count}`")))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, _name] => elements
                .last_mut()
                .ok_or_else(|| Error::format("ply", "property before element"))?
                .props
                .push(Property::List {
                    count: Scalar::parse(count)?,
                    item: Scalar::parse(item)?,
                }),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::format("ply", "property before element"))?
                .props
                .push(Property::Scalar(name.to_string(), Scalar::parse(ty)?)),
            _ => {
                return Err(Error::format(
                    "ply",
                    format!("unexpected header line `{l}`"),
                ))
            }
        }
    }
    let encoding = encoding.ok_or_else(|| Error::format("ply", "missing format line"))?;
    Ok((encoding, elements))
}

/// Reads the `x`, `y`, `z` properties of the `vertex` element.
pub fn read_ply<R: Read>(reader: R) -> Result<Vec<[f32; 3]>> {
    let mut r = BufReader::new(reader);
    let (encoding, elements) = parse_header(&mut r)?;
    let mut points = Vec::new();
    let mut ascii_lines = if encoding == Encoding::Ascii {
        let mut rest = String::new();
        r.read_to_string(&mut rest)?;
        Some(
            rest.lines()
                .map(str::to_owned)
                .collect::<Vec<_>>()
                .into_iter(),
        )
    } else {
        None
    };
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let axis_of = |name: &str| match name {
            "x" => Some(0),
            "y" => Some(1),
            "z" => Some(2),
            _ => None,
        };
        if is_vertex {
            let found: Vec<usize> = el
                .props
                .iter()
                .filter_map(|p| match p {
                    Property::Scalar(n, _) => axis_of(n),
                    Property::List { .. } => None,
                })
                .collect();
            if found.len() != 3 {
                return Err(Error::format("ply", "vertex element lacks x/y/z"));
            }
            points.reserve(el.count);
        }
        for _ in 0..el.count {
            let mut p = [0f32; 3];
            match ascii_lines.as_mut() {
                Some(lines) => {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::format("ply", "too few data lines"))?;
                    let mut values = line.split_whitespace();
                    let mut next = || -> Result<f64> {
                        values
                            .next()
                            .ok_or_else(|| Error::format("ply", "short data line"))?
                            .parse::<f64>()
                            .map_err(|_| Error::format("ply", "bad number"))
                    };
                    for prop in &el.props {
                        match prop {
                            Property::Scalar(name, _) => {
                                let v = next()?;
                                if let (true, Some(a)) = (is_vertex, axis_of(name)) {
                                    p[a] = v as f32;
                                }
                            }
                            Property::List { .. } => {
                                let n = next()? as usize;
                                for _ in 0..n {
                                    next()?;
                                }
                            }
                        }
                    }
                }
                None => {
                    for prop in &el.props {
                        match prop {
                            Property::Scalar(name, ty) => {
                                let v = ty.read(&mut r, encoding)?;
                                if let (true, Some(a)) = (is_vertex, axis_of(name)) {
                                    p[a] = v as f32;
                                }
                            }
                            Property::List { count, item } => {
                                let n = count.read(&mut r, encoding)? as usize;
                                for _ in 0..n {
                                    item.read(&mut r, encoding)?;
                                }
                            }
                        }
                    }
                }
            }
            if is_vertex {
                points.push(p);
            }
        }
    }
    Ok(points)
}

/// Binary little-endian PLY with float `x y z` vertices.
pub fn write_ply<W: Write>(mut w: W, points: &[[f32; 3]]) -> Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    )?;
    w.write_all(&xyz_bytes(points))?;
    w.flush()?;
    Ok(())
}

fn xyz_bytes(points: &[[f32; 3]]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(points.len() * 12);
    for p in points {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    buf
}

pub fn read_raw_xyz<R: Read>(mut r: R) -> Result<Vec<[f32; 3]>> {
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() % 12 != 0 {
        return Err(Error::format(
            "raw xyz",
            format!("{} bytes is not a multiple of 12", raw.len()),
        ));
    }
    Ok(raw
        .chunks_exact(12)
        .map(|c| {
            [
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
                f32::from_le_bytes(c[8..12].try_into().unwrap()),
            ]
        })
        .collect())
}

pub fn write_raw_xyz<W: Write>(mut w: W, points: &[[f32; 3]]) -> Result<()> {
    w.write_all(&xyz_bytes(points))?;
    w.flush()?;
    Ok(())
}

/// Reads a `.ply` or raw `.bin`/`.xyz` point file by extension.
pub fn read_points_file(path: &Path) -> Result<Vec<[f32; 3]>> {
    let file = std::fs::File::open(path).map_err(|source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    })?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => read_ply(file),
        Some("bin") | Some("xyz") => read_raw_xyz(BufReader::new(file)),
        _ => Err(Error::InvalidArgument(format!(
            "{}: expected a .ply, .bin or .xyz point file",
            path.display()
        ))),
    }
}
