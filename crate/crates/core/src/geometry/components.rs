use super::TriMesh;

struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

/// Triangle ids grouped by shared-vertex connectivity, largest group first.
///
/// Groups are ordered by triangle count, then total area, then lowest triangle id.
pub fn component_triangles(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(mesh.vertices.len());
    for t in &mesh.triangles {
        uf.union(t[0], t[1]);
        uf.union(t[1], t[2]);
    }
    let mut label_of_root = vec![usize::MAX; mesh.vertices.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, t) in mesh.triangles.iter().enumerate() {
        let root = uf.find(t[0]) as usize;
        if label_of_root[root] == usize::MAX {
            label_of_root[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[label_of_root[root]].push(i);
    }
    let mut keyed: Vec<(usize, f64, Vec<usize>)> = groups
        .into_iter()
        .map(|g| {
            let area = g.iter().map(|&t| mesh.triangle_area(t)).sum();
            (g.len(), area, g)
        })
        .collect();
    keyed.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2[0].cmp(&b.2[0]))
    });
    keyed.into_iter().map(|(_, _, g)| g).collect()
}

/// Splits a mesh into connected components with compacted vertex lists.
pub fn connected_components(mesh: &TriMesh) -> Vec<TriMesh> {
    component_triangles(mesh)
        .iter()
        .map(|g| mesh.submesh(g))
        .collect()
}

/// Largest component by triangle count (ties broken by area), or `None` for an empty mesh.
pub fn largest_component(mesh: &TriMesh) -> Option<TriMesh> {
    component_triangles(mesh).first().map(|g| mesh.submesh(g))
}
