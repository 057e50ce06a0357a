// Payload shapes served by the session API. The trial payload carries no
// information about which side holds the original image.

export type Progress = {
  status: 'calibrating' | 'running' | 'finished';
  images_done: number;
  images_total: number;
  trials_done: number;
  current_image: string | null;
};

export type SessionInfo = Progress & { session_id: string };

export type TrialPayload = {
  trial_id: string;
  left: string; // base64 PNG
  right: string; // base64 PNG
  mask: string; // base64 PNG
  deadline_seconds: number;
  calibration: boolean;
  progress: Progress;
};

export type ResponseResult = Progress & { correct: boolean };

export type Side = 'left' | 'right';
