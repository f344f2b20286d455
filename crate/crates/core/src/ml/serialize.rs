//! Versioned flat binary model format.
//!
//! Layout: magic "GZML", format version (u32 LE), classifier kind (u8),
//! input spec (tag + u32 dims), then the parameter payload as little-endian
//! 64-bit floats (network: flat parameter vector; SVM: per-machine dual
//! coefficients, labels, bias and support vectors).

use std::io::{Read, Write};

use super::nets::{NetKind, Network};
use super::svm::{BinarySvm, Kernel, SvmConfig, SvmModel};
use super::{ClassifierKind, InputSpec, ModelParams, TrainedModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GZML";
pub const FORMAT_VERSION: u32 = 1;

fn kind_code(kind: ClassifierKind) -> u8 {
    match kind {
        ClassifierKind::Svm => 0,
        ClassifierKind::Fcn => 1,
        ClassifierKind::Lstm => 2,
        ClassifierKind::Cnn => 3,
    }
}

fn kind_from_code(code: u8) -> Result<ClassifierKind> {
    Ok(match code {
        0 => ClassifierKind::Svm,
        1 => ClassifierKind::Fcn,
        2 => ClassifierKind::Lstm,
        3 => ClassifierKind::Cnn,
        other => return Err(Error::validation(format!("unknown model kind code {other}"))),
    })
}

fn w_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_f64s(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    for &v in vs {
        w_f64(w, v)?;
    }
    Ok(())
}

fn r_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn r_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn r_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn r_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn r_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r_f64(r)?);
    }
    Ok(out)
}

fn write_input_spec(w: &mut impl Write, spec: &InputSpec) -> Result<()> {
    match *spec {
        InputSpec::Features { dim, classes } => {
            w.write_all(&[0u8])?;
            w_u32(w, dim as u32)?;
            w_u32(w, classes as u32)?;
        }
        InputSpec::Waveform { steps, channels, classes } => {
            w.write_all(&[1u8])?;
            w_u32(w, steps as u32)?;
            w_u32(w, channels as u32)?;
            w_u32(w, classes as u32)?;
        }
    }
    Ok(())
}

fn read_input_spec(r: &mut impl Read) -> Result<InputSpec> {
    match r_u8(r)? {
        0 => Ok(InputSpec::Features {
            dim: r_u32(r)? as usize,
            classes: r_u32(r)? as usize,
        }),
        1 => Ok(InputSpec::Waveform {
            steps: r_u32(r)? as usize,
            channels: r_u32(r)? as usize,
            classes: r_u32(r)? as usize,
        }),
        other => Err(Error::validation(format!("unknown input spec tag {other}"))),
    }
}

pub fn write_model(model: &TrainedModel, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w_u32(w, FORMAT_VERSION)?;
    w.write_all(&[kind_code(model.kind)])?;
    write_input_spec(w, &model.input)?;
    match &model.params {
        ModelParams::Net(net) => {
            w_u64(w, net.params().len() as u64)?;
            w_f64s(w, net.params())?;
        }
        ModelParams::Svm(svm) => {
            w_u32(w, svm.classes as u32)?;
            w_u32(w, svm.dim as u32)?;
            match svm.kernel {
                Kernel::Linear => {
                    w.write_all(&[0u8])?;
                    w_f64(w, 0.0)?;
                }
                Kernel::Rbf { gamma } => {
                    w.write_all(&[1u8])?;
                    w_f64(w, gamma)?;
                }
            }
            w_f64(w, svm.config.c)?;
            w_f64(w, svm.config.tol)?;
            w_u32(w, svm.machines.len() as u32)?;
            for m in &svm.machines {
                w_u32(w, m.pos as u32)?;
                w_u32(w, m.neg as u32)?;
                w_f64(w, m.bias)?;
                w_u64(w, m.alpha.len() as u64)?;
                w_f64s(w, &m.alpha)?;
                w_f64s(w, &m.labels)?;
                for sv in &m.support {
                    w_f64s(w, sv)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<TrainedModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::validation("not a GZML model file".to_string()));
    }
    let version = r_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::validation(format!(
            "unsupported model format version {version}"
        )));
    }
    let kind = kind_from_code(r_u8(r)?)?;
    let input = read_input_spec(r)?;

    let params = match kind {
        ClassifierKind::Svm => {
            let classes = r_u32(r)? as usize;
            let dim = r_u32(r)? as usize;
            let kernel = match r_u8(r)? {
                0 => {
                    r_f64(r)?;
                    Kernel::Linear
                }
                1 => Kernel::Rbf { gamma: r_f64(r)? },
                other => {
                    return Err(Error::validation(format!("unknown kernel code {other}")))
                }
            };
            let c = r_f64(r)?;
            let tol = r_f64(r)?;
            let n_machines = r_u32(r)? as usize;
            let mut machines = Vec::with_capacity(n_machines);
            for _ in 0..n_machines {
                let pos = r_u32(r)? as usize;
                let neg = r_u32(r)? as usize;
                let bias = r_f64(r)?;
                let n_sv = r_u64(r)? as usize;
                let alpha = r_f64s(r, n_sv)?;
                let labels = r_f64s(r, n_sv)?;
                let mut support = Vec::with_capacity(n_sv);
                for _ in 0..n_sv {
                    support.push(r_f64s(r, dim)?);
                }
                machines.push(BinarySvm { pos, neg, alpha, labels, support, bias });
            }
            let config = SvmConfig {
                c,
                tol,
                kernel: match kernel {
                    Kernel::Linear => super::svm::KernelSpec::Linear,
                    Kernel::Rbf { gamma } => super::svm::KernelSpec::Rbf { gamma: Some(gamma) },
                },
                ..SvmConfig::default()
            };
            ModelParams::Svm(SvmModel { classes, dim, kernel, config, machines })
        }
        ClassifierKind::Fcn | ClassifierKind::Lstm | ClassifierKind::Cnn => {
            let count = r_u64(r)? as usize;
            let flat = r_f64s(r, count)?;
            let (steps, channels, classes) = match input {
                InputSpec::Waveform { steps, channels, classes } => (steps, channels, classes),
                InputSpec::Features { .. } => {
                    return Err(Error::validation(
                        "network models require a waveform input spec".to_string(),
                    ))
                }
            };
            let net_kind = match kind {
                ClassifierKind::Fcn => NetKind::Fcn,
                ClassifierKind::Lstm => NetKind::Lstm,
                ClassifierKind::Cnn => NetKind::Cnn,
                ClassifierKind::Svm => unreachable!(),
            };
            ModelParams::Net(Network::from_params(net_kind, steps, channels, classes, flat)?)
        }
    };
    Ok(TrainedModel { kind, input, params, train_loss: Vec::new() })
}

/// Human-readable header summary (used by the CLI's `model dump`).
pub fn dump_header(r: &mut impl Read) -> Result<String> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::validation("not a GZML model file".to_string()));
    }
    let version = r_u32(r)?;
    let kind = kind_from_code(r_u8(r)?)?;
    let input = read_input_spec(r)?;
    let mut out = format!(
        "magic: GZML\nversion: {version}\nkind: {}\n",
        kind.name()
    );
    match input {
        InputSpec::Waveform { steps, channels, classes } => {
            out.push_str(&format!(
                "input: waveform {steps} steps x {channels} channels\nclasses: {classes}\n"
            ));
            let count = r_u64(r)?;
            out.push_str(&format!("parameters: {count}\n"));
        }
        InputSpec::Features { dim, classes } => {
            out.push_str(&format!("input: features dim {dim}\nclasses: {classes}\n"));
            let sv_classes = r_u32(r)?;
            let _dim = r_u32(r)?;
            let kernel = match r_u8(r)? {
                0 => {
                    r_f64(r)?;
                    "linear".to_string()
                }
                _ => format!("rbf gamma {:.6}", r_f64(r)?),
            };
            let c = r_f64(r)?;
            let _tol = r_f64(r)?;
            let machines = r_u32(r)?;
            out.push_str(&format!(
                "kernel: {kernel}\nC: {c}\nmachines: {machines} (one-vs-one over {sv_classes} classes)\n"
            ));
        }
    }
    Ok(out)
}
