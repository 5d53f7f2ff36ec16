"""Dataset ingestion and the JSONL manifest format.

Expected layout: one subdirectory per class label (``normal``, ``benign``),
images as ``<name>.png`` with an optional ``<name>_mask.png`` companion.
Normal-class images without a mask get an empty ground truth downstream.
"""

import json
from dataclasses import dataclass
from pathlib import Path

CLASS_LABELS = ("normal", "benign")


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: str
    gt_mask_path: str  # may be None
    class_label: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple

    def __post_init__(self):
        ids = [e.image_id for e in self.entries]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate image ids in manifest: {dupes}")
        for e in self.entries:
            if not Path(e.image_path).is_file():
                raise FileNotFoundError(f"manifest references missing image: {e.image_path}")
            if e.gt_mask_path is not None and not Path(e.gt_mask_path).is_file():
                raise FileNotFoundError(f"manifest references missing mask: {e.gt_mask_path}")

    def __len__(self):
        return len(self.entries)

    def to_jsonl(self) -> str:
        lines = []
        for e in self.entries:
            lines.append(
                json.dumps(
                    {
                        "image_id": e.image_id,
                        "image_path": e.image_path,
                        "gt_mask_path": e.gt_mask_path,
                        "class_label": e.class_label,
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        entries = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            entries.append(
                ManifestEntry(
                    image_id=rec["image_id"],
                    image_path=rec["image_path"],
                    gt_mask_path=rec.get("gt_mask_path"),
                    class_label=rec["class_label"],
                )
            )
        return cls(entries=tuple(entries))


def _file_safe(image_id: str) -> str:
    return "".join(c if (c.isalnum() or c in "._-() ") else "_" for c in image_id)


def ingest_busi(root_dir, require_benign_masks: bool = True) -> DatasetManifest:
    """Scan a BUSI-style directory tree into a manifest.

    Ids are namespaced by class (``benign_<stem>``) so identical basenames
    across classes never collide. Benign images must carry a mask companion
    unless ``require_benign_masks`` is off; normal images may omit it.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    class_dirs = [d for d in sorted(root.iterdir()) if d.is_dir() and d.name in CLASS_LABELS]
    if not class_dirs:
        raise ValueError(f"no class subdirectories ({'/'.join(CLASS_LABELS)}) under {root}")

    entries = []
    for class_dir in class_dirs:
        label = class_dir.name
        for img_path in sorted(class_dir.glob("*.png")):
            if img_path.stem.endswith("_mask") or "_mask_" in img_path.stem:
                continue
            mask_path = img_path.with_name(img_path.stem + "_mask.png")
            has_mask = mask_path.is_file()
            if not has_mask and label == "benign" and require_benign_masks:
                raise FileNotFoundError(
                    f"benign image without ground-truth companion: {img_path}"
                )
            entries.append(
                ManifestEntry(
                    image_id=_file_safe(f"{label}_{img_path.stem}"),
                    image_path=str(img_path),
                    gt_mask_path=str(mask_path) if has_mask else None,
                    class_label=label,
                )
            )
    if not entries:
        raise ValueError(f"no PNG images found under {root}")
    return DatasetManifest(entries=tuple(entries))
