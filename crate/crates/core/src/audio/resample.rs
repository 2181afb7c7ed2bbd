use std::f64::consts::PI;

use super::WaveForm;

/// Zero crossings of the sinc kernel on each side, at the output cutoff.
const KERNEL_ZEROS: f64 = 16.0;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

// Blackman window on [-1, 1].
fn blackman(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let phase = PI * (u + 1.0);
    0.42 - 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos()
}

/// Windowed-sinc resampling to `target_rate`.
///
/// The kernel cutoff sits at the lower of the two Nyquist frequencies, so
/// downsampling is band-limited. Output length is `round(n · target / source)`.
///
/// Panics if `target_rate` is zero.
pub fn resample(wave: &WaveForm, target_rate: u32) -> WaveForm {
    assert!(target_rate > 0, "target rate must be positive");
    if wave.sample_rate == target_rate {
        return wave.clone();
    }
    let src_rate = wave.sample_rate as f64;
    let ratio = target_rate as f64 / src_rate;
    let cutoff = ratio.min(1.0);
    let half_width = KERNEL_ZEROS / cutoff;
    let n_in = wave.samples.len();
    let n_out = (n_in as f64 * ratio).round() as usize;
    let input = &wave.samples;

    let samples = (0..n_out)
        .map(|i| {
            let center = i as f64 / ratio;
            let lo = (center - half_width).ceil().max(0.0) as usize;
            let hi = ((center + half_width).floor() as usize).min(n_in.saturating_sub(1));
            let mut acc = 0.0;
            for (j, &s) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let dx = center - j as f64;
                acc += s * cutoff * sinc(cutoff * dx) * blackman(dx / half_width);
            }
            acc
        })
        .collect();
    WaveForm {
        samples,
        sample_rate: target_rate,
    }
}
