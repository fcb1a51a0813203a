//! Observation-window assembly. The window for frame t of an episode is
//! [f_{max(0, t-w+1)}, ..., f_{max(0, t-1)}, f_t]: the first frames pad
//! by repeating the episode's first frame, and windows never cross
//! episode boundaries.

/// Global record indices of the window ending at episode-local position
/// `t` of an episode spanning [episode_start, episode_start + len).
pub fn window_indices(episode_start: usize, t: usize, w: usize) -> Vec<usize> {
    assert!(w >= 1, "window length must be >= 1");
    (0..w)
        .map(|i| {
            let back = (w - 1 - i) as isize;
            let idx = t as isize - back;
            episode_start + idx.max(0) as usize
        })
        .collect()
}

/// All windows of an episode, oldest element first in each.
pub fn episode_windows(episode_start: usize, episode_len: usize, w: usize) -> Vec<Vec<usize>> {
    (0..episode_len)
        .map(|t| window_indices(episode_start, t, w))
        .collect()
}
