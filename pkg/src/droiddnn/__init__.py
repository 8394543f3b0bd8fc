"""Static Android APK feature extraction and DNN-based malware classification."""

__version__ = "0.1.0"

BENIGN = "benign"
MALICIOUS = "malicious"
LABELS = (BENIGN, MALICIOUS)
