/// Indexed binary min-heap of clock firing times.
#[derive(Debug, Clone)]
pub(crate) struct ClockQueue {
    heap: Vec<usize>,
    pos: Vec<usize>,
    time: Vec<f64>,
}

impl ClockQueue {
    pub fn new(times: Vec<f64>) -> Self {
        let n = times.len();
        let mut q = ClockQueue { heap: (0..n).collect(), pos: (0..n).collect(), time: times };
        for i in (0..n / 2).rev() {
            q.down(i);
        }
        q
    }

    pub fn peek(&self) -> (usize, f64) {
        let c = self.heap[0];
        (c, self.time[c])
    }

    pub fn time(&self, clock: usize) -> f64 {
        self.time[clock]
    }

    pub fn update(&mut self, clock: usize, t: f64) {
        let old = self.time[clock];
        self.time[clock] = t;
        let p = self.pos[clock];
        if t < old {
            self.up(p);
        } else {
            self.down(p);
        }
    }

    fn less(&self, a: usize, b: usize) -> bool {
        self.time[self.heap[a]] < self.time[self.heap[b]]
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.heap.swap(a, b);
        self.pos[self.heap[a]] = a;
        self.pos[self.heap[b]] = b;
    }

    fn up(&mut self, mut i: usize) {
        while i > 0 {
            let p = (i - 1) / 2;
            if self.less(i, p) {
                self.swap(i, p);
                i = p;
            } else {
                break;
            }
        }
    }

    fn down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut m = i;
            if l < n && self.less(l, m) {
                m = l;
            }
            if r < n && self.less(r, m) {
                m = r;
            }
            if m == i {
                break;
            }
            self.swap(i, m);
            i = m;
        }
    }
}
