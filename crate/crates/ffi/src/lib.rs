//! C ABI over the autophoto core: scenes, the aesthetic scorer and the
//! capture environment.
//!
//! All objects are opaque handles created by `ap_*_new`/`ap_*_load` and
//! released by the matching `ap_*_free`. Every fallible call returns an
//! [`ApStatus`]; on failure `ap_last_error_message` describes the cause for
//! the calling thread. Strings returned through out-parameters must be
//! released with `ap_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use autophoto::aesthetics::Scorer;
use autophoto::netcore::Checkpoint;
use autophoto::pomdp::{capture_reward, Action, CaptureEnv, EpisodeConfig, ResetMode, SceneContext};
use autophoto::scene::{generate_scene, true_aesthetic, GenerationConfig, Pose, SceneSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Terminated = 5,
    Internal = 6,
}

/// A generated or loaded scene.
pub struct ApScene(SceneSpec);

/// A trained aesthetic scorer.
pub struct ApScorer(Scorer);

/// One capture episode. The environment borrows the boxed scene context,
/// scorer and config, which live exactly as long as the handle.
pub struct ApEnv {
    env: Option<CaptureEnv<'static>>,
    ctx: *mut SceneContext,
    scorer: *mut Scorer,
    config: *mut EpisodeConfig,
    zeta: u64,
}

impl Drop for ApEnv {
    fn drop(&mut self) {
        // The env holds references into the boxes below, so it goes first.
        self.env = None;
        // SAFETY: the pointers come from Box::into_raw in ap_env_new and are freed once.
        unsafe {
            drop(Box::from_raw(self.ctx));
            drop(Box::from_raw(self.scorer));
            drop(Box::from_raw(self.config));
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: ApStatus, msg: impl std::fmt::Display) -> ApStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting panics into `ApStatus::Internal`.
fn guard(f: impl FnOnce() -> ApStatus) -> ApStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == ApStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(ApStatus::Internal, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, ApStatus> {
    if p.is_null() {
        return Err(fail(ApStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(ApStatus::InvalidArgument, "string argument is not UTF-8"))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> ApStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            ApStatus::Ok
        }
        Err(_) => fail(ApStatus::Internal, "string contains a NUL byte"),
    }
}

macro_rules! non_null {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            return fail(ApStatus::NullPointer, concat!("null pointer: ", stringify!($p)));
        })+
    };
}

/// Version string of the library, valid for the life of the process.
#[no_mangle]
pub extern "C" fn ap_version() -> *const c_char {
    concat!("autophoto ", env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer is valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates a scene with the default generation settings.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_scene_generate(scene_id: u64, seed: u64, out: *mut *mut ApScene) -> ApStatus {
    guard(|| {
        non_null!(out);
        match generate_scene(scene_id, seed, &GenerationConfig::default()) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(ApScene(s)));
                ApStatus::Ok
            }
            Err(e) => fail(ApStatus::InvalidArgument, e),
        }
    })
}

/// Parses a scene file's JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_scene_from_json(json: *const c_char, out: *mut *mut ApScene) -> ApStatus {
    guard(|| {
        non_null!(out);
        let text = match str_arg(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match SceneSpec::from_json(text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(ApScene(s)));
                ApStatus::Ok
            }
            Err(e) => fail(ApStatus::Parse, e),
        }
    })
}

/// Serializes a scene; release the result with `ap_string_free`.
///
/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_scene_to_json(scene: *const ApScene, out: *mut *mut c_char) -> ApStatus {
    guard(|| {
        non_null!(scene, out);
        match (*scene).0.to_json() {
            Ok(s) => put_string(out, s),
            Err(e) => fail(ApStatus::Internal, e),
        }
    })
}

/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_scene_id(scene: *const ApScene, out: *mut u64) -> ApStatus {
    guard(|| {
        non_null!(scene, out);
        *out = (*scene).0.scene_id;
        ApStatus::Ok
    })
}

/// Ground-truth aesthetic value at a pose (meters, radians).
///
/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_scene_true_aesthetic(scene: *const ApScene, x: f64, y: f64, theta: f64, out: *mut f64) -> ApStatus {
    guard(|| {
        non_null!(scene, out);
        if !(x.is_finite() && y.is_finite() && theta.is_finite()) {
            return fail(ApStatus::InvalidArgument, "non-finite pose");
        }
        *out = true_aesthetic(&(*scene).0, &Pose::new(x, y, theta));
        ApStatus::Ok
    })
}

/// # Safety
/// `scene` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ap_scene_free(scene: *mut ApScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Loads a scorer checkpoint from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_scorer_load(path: *const c_char, out: *mut *mut ApScorer) -> ApStatus {
    guard(|| {
        non_null!(out);
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) => return fail(ApStatus::Io, format!("{path}: {e}")),
        };
        let scorer = Checkpoint::read_from(std::io::BufReader::new(file))
            .map_err(|e| e.to_string())
            .and_then(|c| Scorer::from_checkpoint(&c).map_err(|e| e.to_string()));
        match scorer {
            Ok(s) => {
                *out = Box::into_raw(Box::new(ApScorer(s)));
                ApStatus::Ok
            }
            Err(e) => fail(ApStatus::Parse, format!("{path}: {e}")),
        }
    })
}

/// An untrained scorer with seeded initial weights.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_scorer_init(seed: u64, out: *mut *mut ApScorer) -> ApStatus {
    guard(|| {
        non_null!(out);
        *out = Box::into_raw(Box::new(ApScorer(Scorer::init(seed))));
        ApStatus::Ok
    })
}

/// Learned score of the well-exposed view at a pose.
///
/// # Safety
/// `scorer` and `scene` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_scorer_score(scorer: *const ApScorer, scene: *const ApScene, x: f64, y: f64, theta: f64, out: *mut f64) -> ApStatus {
    guard(|| {
        non_null!(scorer, scene, out);
        if !(x.is_finite() && y.is_finite() && theta.is_finite()) {
            return fail(ApStatus::InvalidArgument, "non-finite pose");
        }
        let view = autophoto::scene::render_view(&(*scene).0, &Pose::new(x, y, theta), 1.0);
        *out = (*scorer).0.score(&view);
        ApStatus::Ok
    })
}

/// # Safety
/// `scorer` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ap_scorer_free(scorer: *mut ApScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}

/// Terminal reward for capturing a view scored `phi` against threshold `tau`.
#[no_mangle]
pub extern "C" fn ap_capture_reward(phi: f64, tau: f64) -> f64 {
    capture_reward(phi, tau)
}

/// Starts an evaluation episode on copies of `scene` and `scorer` with the
/// default episode settings. `n_samples` views estimate the threshold.
///
/// # Safety
/// `scene` and `scorer` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_env_new(scene: *const ApScene, scorer: *const ApScorer, n_samples: u32, seed: u64, out: *mut *mut ApEnv) -> ApStatus {
    guard(|| {
        non_null!(scene, scorer, out);
        let config = EpisodeConfig { n_samples: n_samples as usize, ..EpisodeConfig::default() };
        if let Err(e) = config.validate() {
            return fail(ApStatus::InvalidArgument, e);
        }
        let scorer_box = Box::into_raw(Box::new((*scorer).0.clone()));
        let ctx = Box::into_raw(Box::new(SceneContext::new((*scene).0.clone(), &*scorer_box, config.n_samples)));
        let config = Box::into_raw(Box::new(config));
        let mut handle = Box::new(ApEnv { env: None, ctx, scorer: scorer_box, config, zeta: 0 });
        // SAFETY: the boxes outlive `env`; ApEnv::drop clears `env` before freeing them.
        handle.env = Some(CaptureEnv::reset(&*ctx, &*scorer_box, &*config, seed, ResetMode::Eval));
        *out = Box::into_raw(handle);
        ApStatus::Ok
    })
}

unsafe fn env_ref<'a>(env: *const ApEnv) -> &'a CaptureEnv<'static> {
    (*env).env.as_ref().expect("env is set at construction")
}

/// Takes action `action` (0..9 in the order F, B, L10, L30, L90, R10, R30,
/// R90, CAPTURE). Writes the step reward and whether the episode ended.
///
/// # Safety
/// `env` must be a live handle; `reward` and `done` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ap_env_step(env: *mut ApEnv, action: u32, reward: *mut f64, done: *mut bool) -> ApStatus {
    guard(|| {
        non_null!(env, reward, done);
        let Some(a) = Action::from_index(action as usize) else {
            return fail(ApStatus::InvalidArgument, format!("action index {action} out of range"));
        };
        let handle = &mut *env;
        let zeta = handle.zeta;
        let inner = handle.env.as_mut().expect("env is set at construction");
        match inner.step(a, zeta) {
            Ok(o) => {
                handle.zeta += 1;
                *reward = o.reward;
                *done = o.done;
                ApStatus::Ok
            }
            Err(autophoto::pomdp::EnvError::Terminated) => fail(ApStatus::Terminated, "episode already terminated"),
            Err(e) => fail(ApStatus::Internal, e),
        }
    })
}

/// Current pose and learned score.
///
/// # Safety
/// `env` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ap_env_state(env: *const ApEnv, x: *mut f64, y: *mut f64, theta: *mut f64, phi: *mut f64) -> ApStatus {
    guard(|| {
        non_null!(env, x, y, theta, phi);
        let e = env_ref(env);
        let p = e.pose();
        (*x, *y, *theta, *phi) = (p.x, p.y, p.theta, e.phi());
        ApStatus::Ok
    })
}

/// Capture threshold of this episode.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_env_tau(env: *const ApEnv, out: *mut f64) -> ApStatus {
    guard(|| {
        non_null!(env, out);
        *out = env_ref(env).threshold().tau;
        ApStatus::Ok
    })
}

/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_env_is_done(env: *const ApEnv, out: *mut bool) -> ApStatus {
    guard(|| {
        non_null!(env, out);
        *out = env_ref(env).is_done();
        ApStatus::Ok
    })
}

/// The episode transcript as NDJSON; release with `ap_string_free`.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ap_env_transcript(env: *const ApEnv, out: *mut *mut c_char) -> ApStatus {
    guard(|| {
        non_null!(env, out);
        put_string(out, env_ref(env).transcript().to_ndjson(None))
    })
}

/// # Safety
/// `env` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ap_env_free(env: *mut ApEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}
