//! C ABI over `odbench`.
//!
//! Every fallible function returns an [`OdbStatus`] and writes its result
//! through an out-pointer. On failure, [`odb_last_error`] returns a message
//! for the calling thread. Handles are opaque and released with the matching
//! `*_free` function; passing NULL to a `*_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use odbench::bench::{emit_plot_data, load_manifest, render_report, run, ReportFormat};
use odbench::data::{load_image, parse_detections, parse_ground_truth, AnnotationFormat, Dataset, DetectionSet, ImageBuffer};
use odbench::detection::{evaluate_all, relative_drop, EvalOptions};
use odbench::perceptual::{lp_norms, lpips_distance, psnr, ssim, LayerWeights, PerceptualFeatureSet};
use odbench::{Category, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdbStatus {
    Ok = 0,
    Parse = 1,
    Validation = 2,
    Integrity = 3,
    Shape = 4,
    Decode = 5,
    Argument = 6,
    UndefinedMetric = 7,
    Numeric = 8,
    Resolution = 9,
    Io = 10,
    NullPointer = 11,
    Panic = 12,
}

impl From<Category> for OdbStatus {
    fn from(c: Category) -> Self {
        match c {
            Category::Parse => OdbStatus::Parse,
            Category::Validation => OdbStatus::Validation,
            Category::Integrity => OdbStatus::Integrity,
            Category::Shape => OdbStatus::Shape,
            Category::Decode => OdbStatus::Decode,
            Category::Argument => OdbStatus::Argument,
            Category::UndefinedMetric => OdbStatus::UndefinedMetric,
            Category::Numeric => OdbStatus::Numeric,
            Category::Resolution => OdbStatus::Resolution,
            Category::Io => OdbStatus::Io,
        }
    }
}

/// Annotation formats accepted by `odb_dataset_load`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdbFormat {
    Coco = 0,
    VocXml = 1,
}

/// Detection metrics in percent.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdbMetrics {
    pub map: f64,
    pub ap_loc: f64,
    pub csr: f64,
}

/// Per-image perceptual distances; `psnr` is `+inf` for identical images.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdbPerceptual {
    pub l0: u64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub struct OdbDataset(Dataset);

pub struct OdbDetections(DetectionSet);

pub struct OdbImage(ImageBuffer);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OdbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            OdbStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            e.category().into()
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} is NULL"));
            OdbStatus::NullPointer
        }
        Err(_) => {
            set_last_error("internal panic".into());
            OdbStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::Argument(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Message describing the last failure on this thread, or NULL after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn odb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn odb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses ground truth; `format` is an [`OdbFormat`] value.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn odb_dataset_load(path: *const c_char, format: u32, out: *mut *mut OdbDataset) -> OdbStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let format = match format {
            f if f == OdbFormat::Coco as u32 => AnnotationFormat::Coco,
            f if f == OdbFormat::VocXml as u32 => AnnotationFormat::VocXml,
            other => return Err(Error::Argument(format!("unknown annotation format {other}")).into()),
        };
        let ds = parse_ground_truth(&path_arg(path, "path")?, format)?;
        *slot = Box::into_raw(Box::new(OdbDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from [`odb_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn odb_dataset_free(ds: *mut OdbDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of images, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn odb_dataset_image_count(ds: *const OdbDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.images().len())
}

/// Number of classes, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn odb_dataset_class_count(ds: *const OdbDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.class_count())
}

/// Loads a COCO results file against `ds`.
///
/// # Safety
/// `ds` must be a live dataset, `path` a NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn odb_detections_load(
    ds: *const OdbDataset,
    path: *const c_char,
    out: *mut *mut OdbDetections,
) -> OdbStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let ds = borrow(ds, "dataset")?;
        let dets = parse_detections(&path_arg(path, "path")?, &ds.0)?;
        *slot = Box::into_raw(Box::new(OdbDetections(dets)));
        Ok(())
    })
}

/// # Safety
/// `dets` must come from [`odb_detections_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn odb_detections_free(dets: *mut OdbDetections) {
    if !dets.is_null() {
        drop(Box::from_raw(dets));
    }
}

/// mAP, AP_loc and CSR at `iou_threshold`, difficult objects ignored.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn odb_evaluate(
    ds: *const OdbDataset,
    dets: *const OdbDetections,
    iou_threshold: f64,
    out: *mut OdbMetrics,
) -> OdbStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let m = evaluate_all(&borrow(ds, "dataset")?.0, &borrow(dets, "detections")?.0, &EvalOptions::with_threshold(iou_threshold))?;
        *slot = OdbMetrics {
            map: m.map,
            ap_loc: m.ap_loc,
            csr: m.csr,
        };
        Ok(())
    })
}

/// `100 (benign - attacked) / benign`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn odb_relative_drop(benign: f64, attacked: f64, out: *mut f64) -> OdbStatus {
    guard(|| {
        *out_ref(out, "out")? = relative_drop(benign, attacked)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn odb_image_load(path: *const c_char, out: *mut *mut OdbImage) -> OdbStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let img = load_image(&path_arg(path, "path")?)?;
        *slot = Box::into_raw(Box::new(OdbImage(img)));
        Ok(())
    })
}

/// Copies `len` bytes of interleaved RGB; `len` must be `width * height * 3`.
///
/// # Safety
/// `rgb` must point to `len` readable bytes and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn odb_image_from_rgb(
    width: u32,
    height: u32,
    rgb: *const u8,
    len: usize,
    out: *mut *mut OdbImage,
) -> OdbStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        if rgb.is_null() {
            return Err(Failure::Null("rgb"));
        }
        let pixels = std::slice::from_raw_parts(rgb, len).to_vec();
        *slot = Box::into_raw(Box::new(OdbImage(ImageBuffer::new(width, height, pixels)?)));
        Ok(())
    })
}

/// # Safety
/// `img` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn odb_image_free(img: *mut OdbImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// # Safety
/// `img` must be NULL or a live image handle.
#[no_mangle]
pub unsafe extern "C" fn odb_image_width(img: *const OdbImage) -> u32 {
    img.as_ref().map_or(0, |i| i.0.width())
}

/// # Safety
/// `img` must be NULL or a live image handle.
#[no_mangle]
pub unsafe extern "C" fn odb_image_height(img: *const OdbImage) -> u32 {
    img.as_ref().map_or(0, |i| i.0.height())
}

/// Distances between two images of equal size. SSIM needs at least 11x11.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn odb_perceptual(
    clean: *const OdbImage,
    adv: *const OdbImage,
    out: *mut OdbPerceptual,
) -> OdbStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let (a, b) = (&borrow(clean, "clean")?.0, &borrow(adv, "adv")?.0);
        let n = lp_norms(a, b)?;
        *slot = OdbPerceptual {
            l0: n.l0,
            l1: n.l1,
            l2: n.l2,
            linf: n.linf,
            psnr: psnr(a, b)?,
            ssim: ssim(a, b)?,
        };
        Ok(())
    })
}

/// LPIPS between two PFEAT files; `weights` may be NULL for all-ones weights.
///
/// # Safety
/// Paths must be NUL-terminated strings (or NULL for `weights`); `out` valid.
#[no_mangle]
pub unsafe extern "C" fn odb_lpips_files(
    clean: *const c_char,
    adv: *const c_char,
    weights: *const c_char,
    out: *mut f64,
) -> OdbStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let fa = PerceptualFeatureSet::read(&path_arg(clean, "clean")?)?;
        let fb = PerceptualFeatureSet::read(&path_arg(adv, "adv")?)?;
        let w = if weights.is_null() {
            LayerWeights::uniform(&fa)
        } else {
            LayerWeights::read(&path_arg(weights, "weights")?)?
        };
        *slot = lpips_distance(&fa, &fb, &w)?;
        Ok(())
    })
}

/// Runs a benchmark manifest and writes report.csv, report.md, report.json and
/// plotdata.csv into `out_dir`. `workers` of 0 means one per logical core.
/// Failed conditions are listed in the report; the call still returns OK.
///
/// # Safety
/// Paths must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn odb_benchmark_run(manifest: *const c_char, workers: usize, out_dir: *const c_char) -> OdbStatus {
    guard(|| {
        let manifest = load_manifest(&path_arg(manifest, "manifest")?)?;
        let dir = path_arg(out_dir, "out_dir")?;
        let workers = if workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            workers
        };
        let report = run(&manifest, workers)?;
        let io = |p: PathBuf, bytes: Vec<u8>| std::fs::write(&p, bytes).map_err(|e| Error::Io { path: p, source: e });
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        for format in [ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Json] {
            io(dir.join(format.file_name()), render_report(&report, format)?)?;
        }
        io(dir.join("plotdata.csv"), emit_plot_data(&report).into_bytes())?;
        Ok(())
    })
}
